#include "mcg/oracle/oracle.hpp"

#include "mcg/flow/dct.hpp"
#include "mcg/rng.hpp"

namespace mcg::oracle {

Arr TargetOracle::query(const Tensor& x_adv, const AttackGoal& goal) {
  if (ledger_.exhausted()) throw BudgetExhausted("oracle query over budget");
  require_finite(x_adv, "oracle query");
  Arr scores = fn_(x_adv);  // OracleUnavailable propagates without charging
  if (scores.size() == 0 || !scores.isFinite().all())
    throw InvalidScores("oracle returned malformed scores");
  ledger_.charge(is_success(scores, goal));
  if (history_)
    history_->append({x_adv, scores, /*adversarial=*/true});
  return scores;
}

ScoreFn model_score_fn(const nn::Classifier& model) {
  return [&model](const Tensor& x) { return model.scores(x); };
}

ScoreFn apply_defense(ScoreFn base, const DefenseWrapper& wrapper,
                      std::uint64_t seed) {
  if (wrapper.kind == DefenseWrapper::Kind::snd) {
    if (wrapper.sigma < 0) throw ConfigError("snd: sigma < 0");
    if (wrapper.sigma == 0) return base;
    auto rng = std::make_shared<Rng>(seed);
    double sigma = wrapper.sigma;
    return [base = std::move(base), rng, sigma](const Tensor& x) {
      Tensor noisy = x;
      noisy.data += sigma * rng->gaussian_vec(x.numel());
      return base(noisy);
    };
  }
  double keep = wrapper.keep_fraction;
  if (keep <= 0.0 || keep > 1.0)
    throw ConfigError("jpeg_dct: keep_fraction outside (0,1]");
  return [base = std::move(base), keep](const Tensor& x) {
    return base(flow::dct_lowpass(x, keep));
  };
}

}  // namespace mcg::oracle
