#ifndef MCG_RNG_HPP
#define MCG_RNG_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace mcg {

// Seeded RNG owned by one episode / training run at a time.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  // [lo, hi] inclusive
  long uniform_int(long lo, long hi) {
    return std::uniform_int_distribution<long>(lo, hi)(gen_);
  }
  double gaussian(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }
  double rademacher() { return uniform() < 0.5 ? -1.0 : 1.0; }

  Eigen::ArrayXd gaussian_vec(long n) {
    Eigen::ArrayXd v(n);
    for (long i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (long i = (long)v.size() - 1; i > 0; --i)
      std::swap(v[i], v[uniform_int(0, i)]);
  }

  std::uint64_t next_seed() { return gen_(); }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mcg

#endif  // MCG_RNG_HPP
