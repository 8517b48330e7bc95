#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "mcg/data/datasets.hpp"
#include "mcg/loss/losses.hpp"
#include "mcg/meta/train.hpp"

using namespace mcg;
using namespace mcg::meta;
using testing::max_abs_diff;

namespace {

flow::FlowConfig tiny_cfg(double eps = 0.3) {
  flow::FlowConfig cfg;
  cfg.image_channels = 1;
  cfg.image_height = cfg.image_width = 4;
  cfg.blocks = 1;
  cfg.steps = 2;
  cfg.hidden = 3;
  cfg.cond_channels = 2;
  cfg.epsilon = eps;
  return cfg;
}

Tensor random_image(std::uint64_t seed, int h = 4, int w = 4) {
  Rng r(seed);
  Tensor t = Tensor::zeros({1, h, w});
  for (long i = 0; i < t.numel(); ++i) t.data[i] = r.uniform(0.2, 0.8);
  return t;
}

// 2-class linear surrogate whose margin decreases along -1 direction
nn::Classifier toy_surrogate(std::uint64_t seed) {
  Rng rng(seed);
  auto m = nn::Classifier::make("linear", 2, 1, 4, 4, rng);
  m.groups()[0].weight.data.setZero();
  for (int i = 0; i < 16; ++i) m.groups()[0].weight.data[i] = 1.0;  // class 0
  m.groups()[0].bias.data << -4.0, 0.0;
  return m;
}

}  // namespace

TEST_CASE("pretrain: zero epochs is a no-op") {
  Rng rng(1);
  auto fp = flow::make_flow(tiny_cfg(), rng);
  loss::PgdCorpus corpus;
  corpus.ids = {0};
  corpus.deltas = {Tensor::full({1, 4, 4}, 0.05)};
  nn::Dataset data;
  data.images = {random_image(2)};
  data.labels = {0};
  data.num_classes = 2;
  PretrainConfig cfg;
  cfg.epochs = 0;
  double before = fp.checksum();
  auto out = pretrain_generator(corpus, data, fp, cfg);
  CHECK(out.checksum() == doctest::Approx(before));
}

TEST_CASE("pretrain: NLL shrinks when overfitting one example") {
  Rng rng(3);
  auto fp = flow::make_flow(tiny_cfg(), rng);
  loss::PgdCorpus corpus;
  corpus.ids = {0};
  Tensor delta = Tensor::zeros({1, 4, 4});
  delta.data = 0.15 * Rng(4).gaussian_vec(16);
  corpus.deltas = {delta};
  nn::Dataset data;
  data.images = {random_image(5)};
  data.labels = {0};
  data.num_classes = 2;
  PretrainConfig cfg;
  cfg.epochs = 60;
  cfg.lr = 0.01;
  cfg.batch_size = 1;
  std::vector<double> curve;
  auto out = pretrain_generator(corpus, data, fp, cfg, &curve);
  REQUIRE(curve.size() == 60);
  CHECK(curve.back() < curve.front());
  // likelihood of the fitted point improved
  CHECK(flow::log_likelihood(delta, data.images[0], out) >
        flow::log_likelihood(delta, data.images[0], fp));

  CHECK_THROWS_AS(pretrain_generator(loss::PgdCorpus{}, data, fp, cfg),
                  DataError);
}

TEST_CASE("inner_adapt: k=0 copy is bit-identical, meta never mutated") {
  Rng rng(6);
  auto fp = flow::make_flow(tiny_cfg(), rng);
  auto surrogate = toy_surrogate(7);
  Tensor x = random_image(8);
  auto goal = AttackGoal::untargeted(0);
  double meta_sum_before = fp.checksum();

  Rng task_rng(9);
  InnerConfig cfg;
  cfg.k = 0;
  auto same = inner_adapt(fp, x, goal, surrogate, cfg, task_rng);
  CHECK(same.checksum() == doctest::Approx(fp.checksum()));

  cfg.k = 5;
  cfg.alpha = 0.01;
  auto adapted = inner_adapt(fp, x, goal, surrogate, cfg, task_rng);
  CHECK(fp.checksum() == doctest::Approx(meta_sum_before));
  CHECK(adapted.checksum() != doctest::Approx(fp.checksum()));

  cfg.k = -1;
  CHECK_THROWS_AS(inner_adapt(fp, x, goal, surrogate, cfg, task_rng),
                  ConfigError);
}

TEST_CASE("inner_adapt drives a convex toy margin to zero") {
  Rng rng(10);
  auto fp = flow::make_flow(tiny_cfg(0.6), rng);
  auto surrogate = toy_surrogate(11);
  Tensor x = random_image(12);
  auto goal = AttackGoal::untargeted(0);
  double before = mode_margin_loss(fp, x, goal, surrogate);
  REQUIRE(before > 0.0);

  InnerConfig cfg;
  cfg.k = 50;
  cfg.alpha = 0.02;
  Rng task_rng(13);
  auto adapted = inner_adapt(fp, x, goal, surrogate, cfg, task_rng);
  CHECK(mode_margin_loss(adapted, x, goal, surrogate) ==
        doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("reptile_outer identities") {
  Rng rng(14);
  auto phi = flow::make_flow(tiny_cfg(), rng);

  SUBCASE("beta zero is a fixed point") {
    auto a = phi;
    a.mu.data.setConstant(3.0);
    auto out = reptile_outer(phi, {a}, 0.0);
    CHECK(out.checksum() == doctest::Approx(phi.checksum()));
  }
  SUBCASE("adapted equal to phi is a fixed point") {
    auto out = reptile_outer(phi, {phi, phi}, 0.7);
    double diff = 0.0;
    std::size_t i = 0;
    std::vector<const Arr*> base;
    phi.for_each([&](const std::string&, const Tensor& t) {
      base.push_back(&t.data);
    });
    out.for_each([&](const std::string&, const Tensor& t) {
      diff = std::max(diff, (t.data - *base[i++]).abs().maxCoeff());
    });
    CHECK(diff == 0.0);
  }
  SUBCASE("scalar arithmetic example") {
    auto a1 = phi, a2 = phi;
    phi.mu.data.setZero();
    a1.mu.data.setConstant(1.0);
    a2.mu.data.setConstant(3.0);
    auto out = reptile_outer(phi, {a1, a2}, 0.5);
    CHECK(out.mu.data[0] == doctest::Approx(1.0));
  }
  SUBCASE("linearity in beta and in the offsets") {
    auto a = phi;
    a.mu.data += 0.25;
    a.log_sigma.data -= 0.1;
    auto out1 = reptile_outer(phi, {a}, 0.2);
    auto out2 = reptile_outer(phi, {a}, 0.4);
    // (out2 - phi) = 2 (out1 - phi), elementwise to 1e-12
    CHECK(max_abs_diff(out2.mu.data - phi.mu.data,
                       2.0 * (out1.mu.data - phi.mu.data)) < 1e-12);
    CHECK(max_abs_diff(out2.log_sigma.data - phi.log_sigma.data,
                       2.0 * (out1.log_sigma.data - phi.log_sigma.data)) <
          1e-12);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(reptile_outer(phi, {}, 0.5), ConfigError);
    Rng rng2(15);
    flow::FlowConfig other = tiny_cfg();
    other.hidden = 4;
    auto mismatched = flow::make_flow(other, rng2);
    CHECK_THROWS_AS(reptile_outer(phi, {mismatched}, 0.5), ShapeError);
  }
}

TEST_CASE("meta_train: zero batches no-op; one batch equals manual reptile") {
  Rng rng(16);
  auto fp = flow::make_flow(tiny_cfg(), rng);
  auto surrogate = toy_surrogate(17);
  nn::Dataset tasks;
  tasks.images = {random_image(18)};
  tasks.labels = {0};
  tasks.num_classes = 2;

  MetaTrainConfig cfg;
  cfg.n_tasks_per_batch = 1;
  cfg.batches = 0;
  cfg.beta = 0.5;
  cfg.inner.k = 2;
  cfg.inner.alpha = 0.01;
  cfg.seed = 19;
  auto same = meta_train(cfg, fp, tasks, surrogate);
  CHECK(same.checksum() == doctest::Approx(fp.checksum()));

  cfg.batches = 1;
  auto trained = meta_train(cfg, fp, tasks, surrogate);

  // replay by hand: single task, shuffle of one element consumes no rng
  Rng replay(19);
  auto adapted = inner_adapt(fp, tasks.images[0],
                             AttackGoal::untargeted(0), surrogate, cfg.inner,
                             replay);
  auto manual = reptile_outer(fp, {adapted}, cfg.beta);
  std::vector<const Arr*> want;
  manual.for_each([&](const std::string&, const Tensor& t) {
    want.push_back(&t.data);
  });
  std::size_t i = 0;
  double diff = 0.0;
  trained.for_each([&](const std::string&, const Tensor& t) {
    diff = std::max(diff, (t.data - *want[i++]).abs().maxCoeff());
  });
  CHECK(diff < 1e-12);
}

TEST_CASE("n=1, k=1 plain-gradient case equals one joint training step") {
  Rng rng(30);
  auto fp = flow::make_flow(tiny_cfg(), rng);
  auto surrogate = toy_surrogate(31);
  nn::Dataset tasks;
  tasks.images = {random_image(32)};
  tasks.labels = {0};
  tasks.num_classes = 2;

  MetaTrainConfig cfg;
  cfg.n_tasks_per_batch = 1;
  cfg.batches = 1;
  cfg.beta = 0.25;
  cfg.inner.k = 1;
  cfg.inner.alpha = 0.05;
  cfg.inner.plain_sgd = true;
  cfg.seed = 33;
  auto trained = meta_train(cfg, fp, tasks, surrogate);

  // independent joint step: phi - alpha*beta*grad with the same noise draw
  // (a shuffle of one task consumes no rng, so the draw replays exactly)
  Rng replay(33);
  Arr noise = replay.gaussian_vec(fp.cfg.latent_dim());
  ad::Tape t;
  auto tp = flow::params_on_tape(t, fp);
  auto sp = surrogate.params_on_tape(t);
  Tensor xf = flow::to_flow_space(fp.cfg, tasks.images[0]);
  auto feats = flow::condition_features(t, fp.cfg, tp,
                                        t.constant(xf.data, xf.shape));
  ad::Var delta = flow::sample_delta_t(t, fp.cfg, tp, noise, 1.0, feats);
  ad::Var adv = t.clamp_ste(
      t.add(t.constant(tasks.images[0].data, tasks.images[0].shape), delta),
      0.0, 1.0);
  t.backward(loss::adv_margin_loss_t(t, surrogate.log_probs(t, adv, sp),
                                     AttackGoal::untargeted(0)));

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

  const double lr = cfg.inner.alpha * cfg.beta;
  std::size_t i = 0;
  double worst = 0.0;
  flow::FlowParams want = fp;
  want.for_each([&](const std::string&, Tensor& p) {
    p.data -= lr * t.grad(vars[i++]);
  });
  i = 0;
  std::vector<const Arr*> expect;
  want.for_each([&](const std::string&, const Tensor& p) {
    expect.push_back(&p.data);
  });
  trained.for_each([&](const std::string&, const Tensor& p) {
    worst = std::max(worst, (p.data - *expect[i++]).abs().maxCoeff());
  });
  CHECK(worst < 1e-8);
}

TEST_CASE("meta_train converges when every task agrees") {
  data::ShapesConfig scfg;
  scfg.num_classes = 2;
  scfg.height = scfg.width = 8;
  auto all = data::make_shapes(12, scfg, 20);
  nn::TrainConfig tc;
  tc.epochs = 8;
  tc.seed = 22;
  auto surrogate = nn::train_classifier(all, "linear", tc, 3, 8, 8);

  // a one-task distribution: the REPTILE pull is unanimous, so the meta
  // parameters must flow into that task's optimum
  nn::Dataset tasks;
  tasks.num_classes = 2;
  tasks.images = {all.images[0]};
  tasks.labels = {all.labels[0]};
  auto goal = AttackGoal::untargeted(tasks.labels[0]);

  flow::FlowConfig fcfg;
  fcfg.image_channels = 3;
  fcfg.image_height = fcfg.image_width = 8;
  fcfg.blocks = 1;
  fcfg.steps = 2;
  fcfg.hidden = 4;
  fcfg.cond_channels = 2;
  fcfg.epsilon = 0.25;
  Rng rng(23);
  auto fp = flow::make_flow(fcfg, rng);
  double before = mode_margin_loss(fp, tasks.images[0], goal, surrogate);
  REQUIRE(before > 0.0);

  MetaTrainConfig cfg;
  cfg.n_tasks_per_batch = 2;
  cfg.batches = 40;
  cfg.beta = 0.5;
  cfg.inner.k = 3;
  cfg.inner.alpha = 0.01;
  cfg.seed = 24;
  std::vector<MetaTrainLogRow> log;
  auto trained = meta_train(cfg, fp, tasks, surrogate, &log);
  REQUIRE(log.size() == 40);
  // adaptation never hurts within a batch
  for (const auto& row : log) CHECK(row.loss_after <= row.loss_before + 1e-9);
  CHECK(mode_margin_loss(trained, tasks.images[0], goal, surrogate) <
        0.1 * before);
}
