#ifndef MCG_META_EPISODE_HPP
#define MCG_META_EPISODE_HPP

#include "mcg/attack/attacker.hpp"
#include "mcg/flow/glow.hpp"
#include "mcg/meta/history.hpp"
#include "mcg/meta/train.hpp"
#include "mcg/nn/classifier.hpp"
#include "mcg/oracle/oracle.hpp"

namespace mcg::meta {

struct FinetuneConfig {
  int m = 4;            // records per mini-batch
  int s = 4;            // optimizer steps per episode
  double lambda = 3e-4;
  int unfrozen_groups = 3;
};

// Mimic fine-tuning: Adam on the soft-label cross entropy between the
// surrogate's scores and recorded target scores. Frozen groups are
// bit-identical on return.
nn::Classifier finetune_surrogate(const nn::Classifier& w,
                                  const AttackHistory& history,
                                  const FinetuneConfig& cfg, Rng& rng);

// Per-example generator adaptation against the (updated) surrogate.
flow::FlowParams adapt_generator(const flow::FlowParams& meta, const Tensor& x,
                                 const AttackGoal& goal,
                                 const nn::Classifier& w_prime,
                                 const InnerConfig& cfg, Rng& rng);

struct EpisodeConfig {
  bool do_finetune = true;  // stage (b); off = fixed-surrogate ablation
  bool do_adapt = true;     // stage (a); both off = pretrain-only ablation
  int rounds = 1;           // generator queries before the attacker hand-off;
                            // each failed round re-runs (b) and (a)
  FinetuneConfig finetune;
  InnerConfig inner;
};

// Long-lived attack-time state: the surrogate copy and history persist
// across episodes within one run; meta parameters are never written.
struct EpisodeState {
  const flow::FlowParams* meta = nullptr;
  nn::Classifier surrogate;  // pre-frozen to the fine-tune scope
  AttackHistory history;

  EpisodeState(const flow::FlowParams& meta_params, nn::Classifier s,
               std::size_t history_capacity = 64)
      : meta(&meta_params), surrogate(std::move(s)),
        history(history_capacity) {}
};

// Stages (b) fine-tune -> (a) adapt -> (c) attacker hand-off. Query #1
// is the generator's deterministic output; its record doubles as the
// episode's benign observation.
AttackResult attack_episode(const Tensor& x, const AttackGoal& goal,
                            EpisodeState& state,
                            oracle::TargetOracle& oracle,
                            attack::Attacker& attacker,
                            const EpisodeConfig& cfg, Rng& rng);

}  // namespace mcg::meta

#endif
