#ifndef MCG_NN_ADAM_HPP
#define MCG_NN_ADAM_HPP

#include <vector>

#include "mcg/tensor.hpp"

namespace mcg::nn {

// Standard Adam. State is positional: the caller must pass the same
// parameter list (same order, same sizes) on every step.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<Arr*>& params,
            const std::vector<const Arr*>& grads) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Arr::Zero(p->size()));
        v_.push_back(Arr::Zero(p->size()));
      }
    }
    ++t_;
    double c1 = 1.0 - std::pow(b1_, t_);
    double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Arr& g = *grads[i];
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
      *params[i] -= lr_ * (m_[i] / c1) / ((v_[i] / c2).sqrt() + eps_);
    }
  }

  double lr() const { return lr_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Arr> m_, v_;
};

}  // namespace mcg::nn

#endif  // MCG_NN_ADAM_HPP
