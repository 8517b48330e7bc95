#ifndef MCG_LOSS_LOSSES_HPP
#define MCG_LOSS_LOSSES_HPP

#include "mcg/ad/tape.hpp"
#include "mcg/core.hpp"

namespace mcg::loss {

// Log of a probability vector, floored away from -inf.
Arr log_scores(const Arr& probs);

// Unhinged margin on log-scores: positive while the goal is unmet.
//   untargeted: s_y - max_{j != y} s_j
//   targeted:   max_{j != t} s_j - s_t
double margin(const Arr& log_scores, const AttackGoal& goal);

// Hinged version: max(0, margin). Zero iff the margin condition holds
// (up to exact ties, which score zero while the attack may still fail).
double adv_margin_loss(const Arr& log_scores, const AttackGoal& goal);

// Tape-side unhinged margin over a log-probability vector.
ad::Var margin_t(ad::Tape& t, ad::Var log_probs, const AttackGoal& goal);
ad::Var adv_margin_loss_t(ad::Tape& t, ad::Var log_probs,
                          const AttackGoal& goal);

// Soft-label cross entropy against a target probability vector.
double mimic_ce_loss(const Arr& surrogate_scores, const Arr& target_scores);
ad::Var mimic_ce_loss_t(ad::Tape& t, ad::Var surrogate_log_probs,
                        const Arr& target_scores);

void check_goal_range(const AttackGoal& goal, int num_classes);

}  // namespace mcg::loss

#endif
