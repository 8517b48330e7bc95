#include "mcg/meta/train.hpp"

#include <cmath>
#include <numeric>

#include "mcg/flow/dct.hpp"
#include "mcg/loss/losses.hpp"
#include "mcg/nn/adam.hpp"

namespace mcg::meta {

namespace {

// Tape handles in FlowParams::for_each order.
std::vector<ad::Var> var_list(const flow::FlowTapeParams& tp) {
  std::vector<ad::Var> vars = {tp.mu, tp.log_sigma};
  for (const auto& blk : tp.blocks)
    for (const auto& s : blk) {
      vars.push_back(s.act_log_s);
      vars.push_back(s.act_b);
      vars.push_back(s.mix_w);
      vars.push_back(s.w1);
      vars.push_back(s.b1);
      vars.push_back(s.w2);
      vars.push_back(s.b2);
    }
  for (std::size_t i = 0; i < tp.cond_w.size(); ++i) {
    vars.push_back(tp.cond_w[i]);
    vars.push_back(tp.cond_b[i]);
  }
  return vars;
}

// Parameter tensors and their tape vars restricted to the scope.
struct Binding {
  std::vector<Arr*> params;
  std::vector<ad::Var> vars;
};

Binding bind_in_scope(flow::FlowParams& fp, const flow::FlowTapeParams& tp,
                      flow::AdaptScope scope) {
  std::vector<ad::Var> all = var_list(tp);
  Binding b;
  std::size_t i = 0;
  fp.for_each([&](const std::string& key, Tensor& t) {
    ad::Var v = all[i++];
    if (scope == flow::AdaptScope::all || key.rfind("gaussian/", 0) == 0) {
      b.params.push_back(&t.data);
      b.vars.push_back(v);
    }
  });
  return b;
}

ad::Var surrogate_margin_on_sample(ad::Tape& t, const flow::FlowConfig& fcfg,
                                   const flow::FlowTapeParams& tp,
                                   const std::vector<ad::Var>& feats,
                                   const Tensor& x, const AttackGoal& goal,
                                   const nn::Classifier& surrogate,
                                   const nn::Classifier::TapeParams& sp,
                                   const Arr& noise, double temperature,
                                   double confidence) {
  ad::Var delta = flow::sample_delta_t(t, fcfg, tp, noise, temperature, feats);
  ad::Var adv = t.clamp_ste(t.add(t.constant(x.data, x.shape), delta), 0.0,
                            1.0);
  ad::Var m = loss::margin_t(t, surrogate.log_probs(t, adv, sp), goal);
  // shifted hinge: keep pushing until the margin clears -confidence, so
  // the solution is not merely borderline on the surrogate
  return t.relu(t.add_scalar(m, confidence));
}

}  // namespace

flow::FlowParams pretrain_generator(const loss::PgdCorpus& corpus,
                                    const nn::Dataset& data,
                                    flow::FlowParams params,
                                    const PretrainConfig& cfg,
                                    std::vector<double>* nll_curve) {
  if (corpus.ids.empty()) throw DataError("pretrain: empty corpus");
  if (cfg.epochs < 0 || cfg.batch_size < 1)
    throw ConfigError("pretrain: bad epochs/batch_size");
  for (int id : corpus.ids)
    if (id < 0 || (std::size_t)id >= data.size())
      throw DataError("pretrain: corpus id outside dataset");

  nn::Adam opt(cfg.lr);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(corpus.ids.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_nll = 0.0;
    long seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      std::size_t stop = std::min(order.size(),
                                  start + (std::size_t)cfg.batch_size);
      ad::Tape t;
      auto tp = flow::params_on_tape(t, params);
      ad::Var total = t.constant_scalar(0.0);
      for (std::size_t j = start; j < stop; ++j) {
        const Tensor& x = data.images[corpus.ids[order[j]]];
        const Tensor& delta = corpus.deltas[order[j]];
        Tensor xf = flow::to_flow_space(params.cfg, x);
        auto feats = flow::condition_features(
            t, params.cfg, tp, t.constant(xf.data, xf.shape));
        Tensor df = params.cfg.dct_factor == 1
                        ? delta
                        : flow::dct_down(delta, params.cfg.dct_factor);
        total = t.add(total,
                      flow::log_likelihood_t(
                          t, params.cfg, tp,
                          t.constant(df.data, df.shape), feats));
      }
      ad::Var loss = t.scale(total, -1.0 / (double)(stop - start));
      double nll = t.val(loss)[0];
      if (!std::isfinite(nll))
        throw NumericalError("pretrain: NLL diverged at epoch " +
                             std::to_string(epoch));
      epoch_nll += nll * (double)(stop - start);
      seen += (long)(stop - start);
      t.backward(loss);

      Binding b = bind_in_scope(params, tp, flow::AdaptScope::all);
      std::vector<const Arr*> grads;
      for (auto v : b.vars) grads.push_back(&t.grad(v));
      opt.step(b.params, grads);
    }
    if (nll_curve) nll_curve->push_back(epoch_nll / (double)seen);
  }
  return params;
}

flow::FlowParams inner_adapt(const flow::FlowParams& meta, const Tensor& x,
                             const AttackGoal& goal,
                             const nn::Classifier& surrogate,
                             const InnerConfig& cfg, Rng& rng) {
  if (cfg.k < 0) throw ConfigError("inner_adapt: k < 0");
  if (cfg.samples_per_step < 1)
    throw ConfigError("inner_adapt: samples_per_step < 1");
  flow::FlowParams adapted = meta;  // deep copy; meta params stay untouched
  nn::Adam opt(cfg.alpha);          // fresh optimizer per task

  for (int step = 0; step < cfg.k; ++step) {
    ad::Tape t;
    auto tp = flow::params_on_tape(t, adapted, cfg.scope);
    auto sp = surrogate.params_on_tape(t);
    Tensor xf = flow::to_flow_space(adapted.cfg, x);
    auto feats = flow::condition_features(t, adapted.cfg, tp,
                                          t.constant(xf.data, xf.shape));
    ad::Var total = t.constant_scalar(0.0);
    for (int s = 0; s < cfg.samples_per_step; ++s) {
      Arr noise = rng.gaussian_vec(adapted.cfg.latent_dim());
      total = t.add(total, surrogate_margin_on_sample(
                               t, adapted.cfg, tp, feats, x, goal, surrogate,
                               sp, noise, cfg.temperature, cfg.confidence));
    }
    ad::Var loss = t.scale(total, 1.0 / cfg.samples_per_step);
    t.backward(loss);

    Binding b = bind_in_scope(adapted, tp, cfg.scope);
    std::vector<const Arr*> grads;
    for (auto v : b.vars) grads.push_back(&t.grad(v));
    if (cfg.plain_sgd)
      for (std::size_t i = 0; i < b.params.size(); ++i)
        *b.params[i] -= cfg.alpha * *grads[i];
    else
      opt.step(b.params, grads);
  }
  return adapted;
}

flow::FlowParams reptile_outer(const flow::FlowParams& phi,
                               const std::vector<flow::FlowParams>& adapted,
                               double beta) {
  if (adapted.empty()) throw ConfigError("reptile_outer: no adapted params");
  flow::FlowParams out = phi;
  std::vector<Arr*> targets;
  out.for_each(
      [&](const std::string&, Tensor& t) { targets.push_back(&t.data); });
  std::vector<const Arr*> base;
  phi.for_each(
      [&](const std::string&, const Tensor& t) { base.push_back(&t.data); });

  const double w = beta / (double)adapted.size();
  for (const auto& a : adapted) {
    std::size_t i = 0;
    a.for_each([&](const std::string& key, const Tensor& t) {
      if (t.data.size() != base[i]->size())
        throw ShapeError("reptile_outer: mismatch at " + key);
      *targets[i] += w * (t.data - *base[i]);
      ++i;
    });
  }
  return out;
}

double mode_margin_loss(const flow::FlowParams& params, const Tensor& x,
                        const AttackGoal& goal,
                        const nn::Classifier& surrogate) {
  Tensor adv = clamp_adversarial(x, flow::mode(x, params));
  return loss::adv_margin_loss(loss::log_scores(surrogate.scores(adv)), goal);
}

flow::FlowParams meta_train(const MetaTrainConfig& cfg,
                            flow::FlowParams pretrained,
                            const nn::Dataset& tasks,
                            const nn::Classifier& surrogate,
                            std::vector<MetaTrainLogRow>* log) {
  if (cfg.n_tasks_per_batch < 1)
    throw ConfigError("meta_train: n_tasks_per_batch < 1");
  if (cfg.batches < 0) throw ConfigError("meta_train: batches < 0");
  if (tasks.size() == 0) throw DataError("meta_train: empty task stream");

  flow::FlowParams phi = std::move(pretrained);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t cursor = 0;

  for (int batch = 0; batch < cfg.batches; ++batch) {
    std::vector<flow::FlowParams> adapted;
    std::vector<std::size_t> picked;
    for (int n = 0; n < cfg.n_tasks_per_batch; ++n) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      picked.push_back(order[cursor++]);
    }
    double before = 0.0;
    for (std::size_t id : picked) {
      const Tensor& x = tasks.images[id];
      auto goal = AttackGoal::untargeted(tasks.labels[id]);
      if (log) before += mode_margin_loss(phi, x, goal, surrogate);
      adapted.push_back(inner_adapt(phi, x, goal, surrogate, cfg.inner, rng));
    }
    flow::FlowParams next = reptile_outer(phi, adapted, cfg.beta);

    if (log) {
      MetaTrainLogRow row;
      row.batch = batch;
      row.loss_before = before / picked.size();
      double after = 0.0;
      for (std::size_t j = 0; j < picked.size(); ++j)
        after += mode_margin_loss(adapted[j], tasks.images[picked[j]],
                                  AttackGoal::untargeted(
                                      tasks.labels[picked[j]]),
                                  surrogate);
      row.loss_after = after / picked.size();
      double norm2 = 0.0;
      std::vector<const Arr*> old_arrs;
      phi.for_each([&](const std::string&, const Tensor& t) {
        old_arrs.push_back(&t.data);
      });
      std::size_t i = 0;
      next.for_each([&](const std::string&, const Tensor& t) {
        norm2 += (t.data - *old_arrs[i++]).square().sum();
      });
      row.param_delta_norm = std::sqrt(norm2);
      log->push_back(row);
    }
    phi = std::move(next);
    if (cfg.checkpoint_interval > 0 && cfg.on_checkpoint &&
        (batch + 1) % cfg.checkpoint_interval == 0)
      cfg.on_checkpoint(batch + 1, phi);
  }
  return phi;
}

}  // namespace mcg::meta
