#ifndef MCG_CORE_HPP
#define MCG_CORE_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "mcg/tensor.hpp"

namespace mcg {

// Signed additive perturbation with its l-inf bound.
struct Perturbation {
  Tensor data;
  double epsilon = 0.0;

  Perturbation() = default;
  Perturbation(Tensor d, double eps) : data(std::move(d)), epsilon(eps) {}
};

enum class GoalMode { untargeted, targeted };

struct AttackGoal {
  GoalMode mode = GoalMode::untargeted;
  int true_label = 0;
  int target_label = -1;

  static AttackGoal untargeted(int y) { return {GoalMode::untargeted, y, -1}; }
  static AttackGoal targeted(int y, int t) {
    if (t == y) throw InvalidGoal("target label equals true label");
    return {GoalMode::targeted, y, t};
  }
  bool is_targeted() const { return mode == GoalMode::targeted; }
};

// Hard budget accounting. One charge per oracle score observation.
class QueryLedger {
 public:
  explicit QueryLedger(std::uint64_t budget) : budget_(budget) {}

  std::uint64_t budget() const { return budget_; }
  std::uint64_t used() const { return used_; }
  std::uint64_t remaining() const { return budget_ - used_; }
  bool exhausted() const { return used_ >= budget_; }

  void charge(bool success_flag) {
    if (used_ >= budget_) throw BudgetExhausted("ledger charge over budget");
    ++used_;
    log_.emplace_back(used_, success_flag);
  }

  const std::vector<std::pair<std::uint64_t, bool>>& log() const {
    return log_;
  }

 private:
  std::uint64_t budget_;
  std::uint64_t used_ = 0;
  std::vector<std::pair<std::uint64_t, bool>> log_;
};

struct AttackResult {
  bool success = false;
  std::uint64_t queries_used = 0;
  Perturbation final_delta;
  bool first_query_success = false;
};

// Ties break toward the smallest index.
inline int argmax_index(const Arr& scores) {
  if (scores.size() == 0) throw InvalidScores("empty score vector");
  int best = 0;
  for (int i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

inline bool is_success(const Arr& scores, const AttackGoal& goal) {
  int top = argmax_index(scores);
  return goal.is_targeted() ? top == goal.target_label
                            : top != goal.true_label;
}

// Componentwise clamp to [-epsilon, +epsilon]. Idempotent.
inline Perturbation project_linf(const Perturbation& delta, double epsilon) {
  if (epsilon < 0) throw ConfigError("project_linf: epsilon < 0");
  require_finite(delta.data, "project_linf");
  Perturbation out = delta;
  out.epsilon = epsilon;
  out.data.data = delta.data.data.cwiseMax(-epsilon).cwiseMin(epsilon);
  return out;
}

inline Tensor clamp_adversarial(const Tensor& x, const Tensor& delta) {
  require_same_shape(x, delta, "clamp_adversarial");
  Tensor out = x;
  out.data = (x.data + delta.data).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

inline Tensor clamp_adversarial(const Tensor& x, const Perturbation& delta) {
  return clamp_adversarial(x, delta.data);
}

}  // namespace mcg

#endif  // MCG_CORE_HPP
