#ifndef MCG_TENSOR_HPP
#define MCG_TENSOR_HPP

#include <Eigen/Dense>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "mcg/errors.hpp"

namespace mcg {

using Arr = Eigen::ArrayXd;

// Dense row-major tensor. Images and perturbations use shape {C,H,W}.
struct Tensor {
  std::vector<int> shape;
  Arr data;

  Tensor() = default;
  Tensor(std::vector<int> s, Arr d) : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<int> s) {
    long n = numel_of(s);
    return Tensor(std::move(s), Arr::Zero(n));
  }
  static Tensor full(std::vector<int> s, double v) {
    long n = numel_of(s);
    return Tensor(std::move(s), Arr::Constant(n, v));
  }

  static long numel_of(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }
  long numel() const { return data.size(); }

  // {C,H,W} accessors
  int channels() const { return shape.at(0); }
  int height() const { return shape.at(1); }
  int width() const { return shape.at(2); }
  double& at(int c, int h, int w) {
    return data[(long)(c * shape[1] + h) * shape[2] + w];
  }
  double at(int c, int h, int w) const {
    return data[(long)(c * shape[1] + h) * shape[2] + w];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool finite() const { return data.isFinite().all(); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch");
}

inline void require_finite(const Tensor& t, const char* where) {
  if (!t.finite())
    throw InvalidTensor(std::string(where) + ": non-finite values");
}

}  // namespace mcg

#endif  // MCG_TENSOR_HPP
