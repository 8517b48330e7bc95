#ifndef MCG_ORACLE_ORACLE_HPP
#define MCG_ORACLE_ORACLE_HPP

#include <functional>
#include <memory>

#include "mcg/core.hpp"
#include "mcg/meta/history.hpp"
#include "mcg/nn/classifier.hpp"

namespace mcg::oracle {

// Raw scoring backend: image in, probability vector out. May throw
// OracleUnavailable for transient failures (never charged).
using ScoreFn = std::function<Arr(const Tensor&)>;

// Black-box target. The only interface is a charged query; every score
// observation costs exactly one ledger unit.
class TargetOracle {
 public:
  TargetOracle(ScoreFn fn, std::uint64_t budget)
      : fn_(std::move(fn)), ledger_(budget) {}

  QueryLedger& ledger() { return ledger_; }
  const QueryLedger& ledger() const { return ledger_; }

  void attach_history(meta::AttackHistory* h) { history_ = h; }

  // Scores for a perturbed input. Charges on success; appends an
  // adversarial record when a history is attached.
  Arr query(const Tensor& x_adv, const AttackGoal& goal);

 private:
  ScoreFn fn_;
  QueryLedger ledger_;
  meta::AttackHistory* history_ = nullptr;
};

struct DefenseWrapper {
  enum class Kind { snd, jpeg_dct } kind = Kind::snd;
  double sigma = 0.0;          // snd
  double keep_fraction = 1.0;  // jpeg_dct
};

// Scoring backend of a local white-box model.
ScoreFn model_score_fn(const nn::Classifier& model);

// Wrap a backend with an input-side defense. The SND wrapper owns a
// seeded noise stream.
ScoreFn apply_defense(ScoreFn base, const DefenseWrapper& wrapper,
                      std::uint64_t seed = 0);

}  // namespace mcg::oracle

#endif
