#include "mcg/meta/episode.hpp"

#include "mcg/loss/losses.hpp"
#include "mcg/nn/adam.hpp"

namespace mcg::meta {

nn::Classifier finetune_surrogate(const nn::Classifier& w,
                                  const AttackHistory& history,
                                  const FinetuneConfig& cfg, Rng& rng) {
  if (history.empty()) throw HistoryEmpty("no records to fine-tune on");
  if (cfg.s < 0 || cfg.m < 1) throw ConfigError("finetune: bad m/s");
  nn::Classifier out = w;
  nn::Adam opt(cfg.lambda);

  for (int step = 0; step < cfg.s; ++step) {
    // uniform mini-batch of m records (with replacement)
    std::vector<std::size_t> batch;
    for (int i = 0; i < cfg.m; ++i)
      batch.push_back((std::size_t)rng.uniform_int(0, history.size() - 1));

    ad::Tape t;
    auto p = out.params_on_tape(t);
    ad::Var total = t.constant_scalar(0.0);
    for (std::size_t idx : batch) {
      const auto& rec = history[idx];
      ad::Var lp = out.log_probs(t, t.constant(rec.image.data,
                                               rec.image.shape), p);
      total = t.add(total, loss::mimic_ce_loss_t(t, lp, rec.target_scores));
    }
    t.backward(t.scale(total, 1.0 / (double)batch.size()));

    std::vector<Arr*> params;
    std::vector<const Arr*> grads;
    for (std::size_t g = 0; g < out.groups().size(); ++g) {
      if (!out.groups()[g].trainable) continue;
      params.push_back(&out.groups()[g].weight.data);
      grads.push_back(&t.grad(p.weights[g]));
      params.push_back(&out.groups()[g].bias.data);
      grads.push_back(&t.grad(p.biases[g]));
    }
    opt.step(params, grads);
  }
  return out;
}

flow::FlowParams adapt_generator(const flow::FlowParams& meta, const Tensor& x,
                                 const AttackGoal& goal,
                                 const nn::Classifier& w_prime,
                                 const InnerConfig& cfg, Rng& rng) {
  return inner_adapt(meta, x, goal, w_prime, cfg, rng);
}

AttackResult attack_episode(const Tensor& x, const AttackGoal& goal,
                            EpisodeState& state,
                            oracle::TargetOracle& oracle,
                            attack::Attacker& attacker,
                            const EpisodeConfig& cfg, Rng& rng) {
  if (cfg.rounds < 1) throw ConfigError("episode: rounds < 1");
  const std::uint64_t used_before = oracle.ledger().used();

  // (b) mimic fine-tuning, skipped before the first observation
  if (cfg.do_finetune && !state.history.empty())
    state.surrogate = finetune_surrogate(state.surrogate, state.history,
                                         cfg.finetune, rng);

  // (a) per-example adaptation against the updated surrogate
  flow::FlowParams adapted =
      cfg.do_adapt ? adapt_generator(*state.meta, x, goal, state.surrogate,
                                     cfg.inner, rng)
                   : *state.meta;

  // (c) generator queries: the deterministic output first, then fresh
  // draws from the adapted density until the round budget runs out
  Perturbation delta0 = flow::mode(x, adapted);
  Arr scores0;
  for (int round = 0; round < cfg.rounds; ++round) {
    if (round > 0)
      delta0 = flow::sample(x, adapted, cfg.inner.temperature, rng);
    if (oracle.ledger().exhausted()) {
      AttackResult r;
      r.final_delta = delta0;
      r.queries_used = oracle.ledger().used() - used_before;
      oracle.attach_history(nullptr);
      return r;
    }
    oracle.attach_history(&state.history);
    scores0 = oracle.query(clamp_adversarial(x, delta0), goal);
    if (round == 0)  // the first query's record doubles as the benign one
      state.history.append({x, scores0, /*adversarial=*/false});

    if (is_success(scores0, goal)) {
      AttackResult r;
      r.success = true;
      r.queries_used = oracle.ledger().used() - used_before;
      r.final_delta = delta0;
      r.first_query_success = r.queries_used == 1;
      oracle.attach_history(nullptr);
      return r;
    }
  }

  attack::InitState init;
  init.delta0 = &delta0.data;
  init.scores0 = &scores0;
  AttackResult r = attacker.run(oracle, x, goal, delta0.epsilon, init, rng);
  r.queries_used = oracle.ledger().used() - used_before;
  r.first_query_success = false;
  oracle.attach_history(nullptr);
  return r;
}

}  // namespace mcg::meta
