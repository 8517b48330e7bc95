#include "mcg/loss/losses.hpp"

#include <algorithm>
#include <cmath>

namespace mcg::loss {

namespace {
const double kTinyProb = 1e-300;

double max_excluding_plain(const Arr& s, int excluded) {
  double best = -std::numeric_limits<double>::infinity();
  for (long i = 0; i < s.size(); ++i)
    if (i != excluded) best = std::max(best, s[i]);
  return best;
}
}  // namespace

void check_goal_range(const AttackGoal& goal, int num_classes) {
  if (goal.true_label < 0 || goal.true_label >= num_classes)
    throw InvalidGoal("true label out of range");
  if (goal.is_targeted() &&
      (goal.target_label < 0 || goal.target_label >= num_classes))
    throw InvalidGoal("target label out of range");
}

Arr log_scores(const Arr& probs) {
  if (probs.size() == 0) throw InvalidScores("empty score vector");
  if (!probs.isFinite().all()) throw InvalidScores("non-finite scores");
  return probs.max(kTinyProb).log();
}

double margin(const Arr& ls, const AttackGoal& goal) {
  check_goal_range(goal, (int)ls.size());
  if ((int)ls.size() < 2) throw InvalidScores("need at least two classes");
  if (goal.is_targeted())
    return max_excluding_plain(ls, goal.target_label) - ls[goal.target_label];
  return ls[goal.true_label] - max_excluding_plain(ls, goal.true_label);
}

double adv_margin_loss(const Arr& ls, const AttackGoal& goal) {
  return std::max(0.0, margin(ls, goal));
}

ad::Var margin_t(ad::Tape& t, ad::Var log_probs, const AttackGoal& goal) {
  check_goal_range(goal, (int)t.val(log_probs).size());
  if (goal.is_targeted())
    return t.sub(t.max_excluding(log_probs, goal.target_label),
                 t.gather1(log_probs, goal.target_label));
  return t.sub(t.gather1(log_probs, goal.true_label),
               t.max_excluding(log_probs, goal.true_label));
}

ad::Var adv_margin_loss_t(ad::Tape& t, ad::Var log_probs,
                          const AttackGoal& goal) {
  return t.relu(margin_t(t, log_probs, goal));
}

namespace {
void check_target_probs(const Arr& target, long n) {
  if (target.size() != n) throw InvalidScores("score length mismatch");
  if (!target.isFinite().all() || target.minCoeff() < 0.0)
    throw InvalidScores("target scores not a probability vector");
  if (std::abs(target.sum() - 1.0) > 1e-3)
    throw InvalidScores("target scores not normalized");
}
}  // namespace

double mimic_ce_loss(const Arr& surrogate_scores, const Arr& target_scores) {
  check_target_probs(target_scores, surrogate_scores.size());
  return -(target_scores * log_scores(surrogate_scores)).sum();
}

ad::Var mimic_ce_loss_t(ad::Tape& t, ad::Var surrogate_log_probs,
                        const Arr& target_scores) {
  check_target_probs(target_scores, t.val(surrogate_log_probs).size());
  return t.neg(t.sum(t.mul(t.constant(target_scores), surrogate_log_probs)));
}

}  // namespace mcg::loss
