#include "mcg/loss/pgd.hpp"

#include "mcg/io/archive.hpp"
#include "mcg/loss/losses.hpp"

namespace mcg::loss {

Perturbation pgd_attack(const nn::Classifier& model, const Tensor& x,
                        const AttackGoal& goal, const PgdConfig& cfg) {
  if (cfg.iters <= 0) throw ConfigError("pgd: iters <= 0");
  if (cfg.step_size <= 0) throw ConfigError("pgd: step_size <= 0");
  if (cfg.epsilon < 0) throw ConfigError("pgd: epsilon < 0");
  check_goal_range(goal, model.num_classes());
  Tensor delta = Tensor::zeros(x.shape);
  if (cfg.epsilon == 0.0) return Perturbation(delta, 0.0);

  for (int it = 0; it < cfg.iters; ++it) {
    ad::Tape t;
    auto p = model.params_on_tape(t);
    ad::Var dv = t.input(delta.data, delta.shape);
    ad::Var adv = t.clamp_ste(t.add(t.constant(x.data, x.shape), dv), 0.0,
                              1.0);
    ad::Var m = margin_t(t, model.log_probs(t, adv, p), goal);
    t.backward(m);
    const Arr& g = t.grad(dv);
    delta.data -= cfg.step_size * g.sign();
    delta.data = delta.data.cwiseMax(-cfg.epsilon).cwiseMin(cfg.epsilon);
  }
  return project_linf(Perturbation(delta, cfg.epsilon), cfg.epsilon);
}

PgdCorpus make_pgd_corpus(const nn::Dataset& data, const nn::Classifier& model,
                          const PgdConfig& cfg) {
  if (data.size() == 0) throw DataError("pgd corpus: empty dataset");
  PgdCorpus c;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto goal = AttackGoal::untargeted(data.labels[i]);
    c.ids.push_back((int)i);
    c.deltas.push_back(pgd_attack(model, data.images[i], goal, cfg).data);
  }
  c.meta = {{"epsilon", cfg.epsilon},
            {"step_size", cfg.step_size},
            {"iters", cfg.iters},
            {"count", (int)c.ids.size()}};
  return c;
}

void save_corpus(const std::string& path, const PgdCorpus& corpus) {
  if (corpus.ids.size() != corpus.deltas.size())
    throw CheckpointError("corpus id/delta count mismatch");
  io::Archive a;
  a.meta = corpus.meta;
  a.meta["kind"] = "pgd_corpus";
  Tensor ids = Tensor::zeros({(int)corpus.ids.size()});
  for (std::size_t i = 0; i < corpus.ids.size(); ++i)
    ids.data[i] = corpus.ids[i];
  a.add("ids", std::move(ids));
  if (!corpus.deltas.empty()) {
    const auto& s = corpus.deltas[0].shape;
    Tensor all = Tensor::zeros({(int)corpus.deltas.size(), s[0], s[1], s[2]});
    long stride = corpus.deltas[0].numel();
    for (std::size_t i = 0; i < corpus.deltas.size(); ++i) {
      require_same_shape(corpus.deltas[i], corpus.deltas[0], "save_corpus");
      all.data.segment(i * stride, stride) = corpus.deltas[i].data;
    }
    a.add("deltas", std::move(all));
  }
  a.save(path);
}

PgdCorpus load_corpus(const std::string& path) {
  io::Archive a = io::Archive::load(path);
  if (a.meta.value("kind", "") != "pgd_corpus")
    throw CheckpointError("not a pgd corpus: " + path);
  PgdCorpus c;
  c.meta = a.meta;
  const Tensor& ids = a.get("ids");
  for (long i = 0; i < ids.numel(); ++i) c.ids.push_back((int)ids.data[i]);
  if (!c.ids.empty()) {
    const Tensor& all = a.get("deltas");
    if (all.shape.size() != 4 || all.shape[0] != (int)c.ids.size())
      throw CheckpointError("corpus delta block malformed");
    std::vector<int> s = {all.shape[1], all.shape[2], all.shape[3]};
    long stride = Tensor::numel_of(s);
    for (std::size_t i = 0; i < c.ids.size(); ++i)
      c.deltas.emplace_back(s, all.data.segment(i * stride, stride));
  }
  return c;
}

}  // namespace mcg::loss
