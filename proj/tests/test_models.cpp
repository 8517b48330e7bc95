#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "mcg/data/datasets.hpp"
#include "mcg/nn/classifier.hpp"

using namespace mcg;
using namespace mcg::nn;

TEST_CASE("shapes dataset is deterministic and covers classes evenly") {
  data::ShapesConfig cfg;
  auto a = data::make_shapes(20, cfg, 42);
  auto b = data::make_shapes(20, cfg, 42);
  auto c = data::make_shapes(20, cfg, 43);
  REQUIRE(a.size() == 20);
  CHECK(a.num_classes == 5);
  CHECK(testing::max_abs_diff(a.images[0].data, b.images[0].data) == 0.0);
  CHECK(testing::max_abs_diff(a.images[0].data, c.images[0].data) > 0.0);
  std::vector<int> counts(5, 0);
  for (int y : a.labels) counts[y]++;
  for (int n : counts) CHECK(n == 4);
  for (const auto& img : a.images) {
    CHECK(img.data.minCoeff() >= 0.0);
    CHECK(img.data.maxCoeff() <= 1.0);
  }
}

TEST_CASE("architectures expose the documented group counts") {
  Rng rng(1);
  CHECK(Classifier::make("linear", 5, 3, 8, 8, rng).groups().size() == 1);
  CHECK(Classifier::make("cnn_a", 5, 3, 32, 32, rng).groups().size() == 5);
  CHECK(Classifier::make("cnn_b", 5, 3, 32, 32, rng).groups().size() == 4);
  CHECK_THROWS_AS(Classifier::make("resnet", 5, 3, 32, 32, rng), ConfigError);
}

TEST_CASE("scores are a probability vector") {
  Rng rng(2);
  auto m = Classifier::make("cnn_b", 4, 3, 16, 16, rng);
  Tensor x = Tensor::full({3, 16, 16}, 0.5);
  Arr s = m.scores(x);
  REQUIRE(s.size() == 4);
  CHECK(s.sum() == doctest::Approx(1.0));
  CHECK(s.minCoeff() > 0.0);
}

TEST_CASE("training reduces error on a separable task") {
  data::ShapesConfig cfg;
  cfg.num_classes = 3;
  auto train = data::make_shapes(90, cfg, 7);
  auto test = data::make_shapes(30, cfg, 8);
  TrainConfig tc;
  tc.epochs = 4;
  tc.seed = 5;
  auto m = train_classifier(train, "linear", tc, 3, 32, 32);
  CHECK(m.test_error(test) < 0.2);
  // determinism: same seed, same parameters
  auto m2 = train_classifier(train, "linear", tc, 3, 32, 32);
  CHECK(testing::max_abs_diff(m.groups()[0].weight.data,
                              m2.groups()[0].weight.data) == 0.0);
}

TEST_CASE("frozen groups receive exactly zero gradient") {
  Rng rng(3);
  auto m = Classifier::make("cnn_b", 3, 3, 8, 8, rng);
  auto frozen = freeze_except_last(m, 2);
  int trainable = 0;
  for (const auto& g : frozen.groups()) trainable += g.trainable ? 1 : 0;
  CHECK(trainable == 2);
  CHECK_FALSE(frozen.groups()[0].trainable);
  CHECK(frozen.groups()[3].trainable);

  ad::Tape t;
  auto p = frozen.params_on_tape(t);
  Tensor x = Tensor::full({3, 8, 8}, 0.3);
  ad::Var lp = frozen.log_probs(t, t.constant(x.data, x.shape), p);
  t.backward(t.neg(t.gather1(lp, 0)));
  CHECK(t.grad(p.weights[0]).abs().maxCoeff() == 0.0);
  CHECK(t.grad(p.weights[3]).abs().maxCoeff() > 0.0);

  CHECK_THROWS_AS(freeze_except_last(m, 0), ConfigError);
  CHECK_THROWS_AS(freeze_except_last(m, 9), ConfigError);
}

TEST_CASE("log_probs agree with plain scores") {
  Rng rng(4);
  auto m = Classifier::make("cnn_a", 5, 3, 16, 16, rng);
  Tensor x = Tensor::full({3, 16, 16}, 0.4);
  ad::Tape t(false);
  auto p = m.params_on_tape(t);
  Arr lp = t.val(m.log_probs(t, t.constant(x.data, x.shape), p));
  CHECK(mcg::testing::max_abs_diff(lp.exp(), m.scores(x)) < 1e-12);
}
