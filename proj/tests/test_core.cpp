#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mcg/core.hpp"

using namespace mcg;

TEST_CASE("ledger charges once per observation and hard-stops at budget") {
  QueryLedger l(3);
  CHECK(l.remaining() == 3);
  l.charge(false);
  l.charge(false);
  l.charge(true);
  CHECK(l.used() == 3);
  CHECK(l.exhausted());
  CHECK_THROWS_AS(l.charge(false), BudgetExhausted);
  CHECK(l.used() == 3);  // failed charge does not count
  REQUIRE(l.log().size() == 3);
  CHECK(l.log()[2].first == 3);
  CHECK(l.log()[2].second);
}

TEST_CASE("zero-budget ledger is exhausted from the start") {
  QueryLedger l(0);
  CHECK(l.exhausted());
  CHECK_THROWS_AS(l.charge(false), BudgetExhausted);
}

TEST_CASE("targeted goal rejects target == true label") {
  CHECK_THROWS_AS(AttackGoal::targeted(2, 2), InvalidGoal);
  auto g = AttackGoal::targeted(2, 4);
  CHECK(g.is_targeted());
  CHECK(g.target_label == 4);
}

TEST_CASE("argmax ties break toward the smallest index") {
  Arr s(4);
  s << 0.2, 0.5, 0.5, 0.1;
  CHECK(argmax_index(s) == 1);
  Arr empty(0);
  CHECK_THROWS_AS(argmax_index(empty), InvalidScores);
}

TEST_CASE("success predicate by goal mode") {
  Arr s(3);
  s << 0.1, 0.7, 0.2;
  CHECK(is_success(s, AttackGoal::untargeted(0)));
  CHECK_FALSE(is_success(s, AttackGoal::untargeted(1)));
  CHECK(is_success(s, AttackGoal::targeted(0, 1)));
  CHECK_FALSE(is_success(s, AttackGoal::targeted(0, 2)));
}

TEST_CASE("l-inf projection clamps and is idempotent") {
  Tensor d = Tensor::zeros({1, 2, 2});
  d.data << 0.5, -0.5, 0.05, 0.0;
  Perturbation p(d, 0.1);
  auto q = project_linf(p, 0.1);
  CHECK(q.data.data[0] == doctest::Approx(0.1));
  CHECK(q.data.data[1] == doctest::Approx(-0.1));
  CHECK(q.data.data[2] == doctest::Approx(0.05));
  auto q2 = project_linf(q, 0.1);
  CHECK((q2.data.data - q.data.data).abs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(project_linf(p, -1.0), ConfigError);
  Perturbation bad(Tensor({1, 1, 1}, Arr::Constant(1, 1.0 / 0.0)), 0.1);
  CHECK_THROWS_AS(project_linf(bad, 0.1), InvalidTensor);

  // epsilon = 0 collapses to the zero perturbation
  auto z = project_linf(p, 0.0);
  CHECK(z.data.data.abs().maxCoeff() == 0.0);
}

TEST_CASE("adversarial image stays in the pixel box") {
  Tensor x = Tensor::full({1, 1, 2}, 0.95);
  Tensor d = Tensor::zeros({1, 1, 2});
  d.data << 0.1, -1.5;
  Tensor adv = clamp_adversarial(x, d);
  CHECK(adv.data[0] == doctest::Approx(1.0));
  CHECK(adv.data[1] == doctest::Approx(0.0));
  Tensor wrong = Tensor::zeros({1, 2, 1});
  CHECK_THROWS_AS(clamp_adversarial(x, wrong), ShapeError);
}

TEST_CASE("error codes partition by category") {
  CHECK(ConfigError("x").code() == ErrorCode::config);
  CHECK(OracleProtocolError("x").code() == ErrorCode::oracle_protocol);
  CHECK(BudgetExhausted("x").code() == ErrorCode::runtime);
}
