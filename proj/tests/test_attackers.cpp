#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mcg/attack/attacker.hpp"
#include "mcg/loss/losses.hpp"

using namespace mcg;
using namespace mcg::attack;
using testing::max_abs_diff;

namespace {

// softmax over w·flat(x+...) per class row; w rows are class logit weights
oracle::ScoreFn linear_fn(std::vector<Arr> rows,
                          std::vector<Tensor>* log = nullptr) {
  return [rows = std::move(rows), log](const Tensor& x) {
    Arr logits(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      logits[i] = (rows[i] * x.data).sum();
    Arr e = (logits - logits.maxCoeff()).exp();
    if (log) log->push_back(x);
    return Arr(e / e.sum());
  };
}

// 2-class toy where the attack must push the flat sum negative
oracle::ScoreFn sum_fn(std::vector<Tensor>* log = nullptr) {
  return [log](const Tensor& x) {
    double v = x.data.sum() - 0.5 * x.data.size();  // centered at 0.5
    Arr e(2);
    e << std::exp(v), std::exp(-v);
    if (log) log->push_back(x);
    return Arr(e / e.sum());
  };
}

// class 0 always wins: unbeatable oracle for accounting tests
oracle::ScoreFn constant_fn() {
  return [](const Tensor&) {
    Arr s(2);
    s << 0.9, 0.1;
    return s;
  };
}

double query_margin(const oracle::ScoreFn& fn, const Tensor& x,
                    const Tensor& delta, const AttackGoal& goal) {
  return loss::adv_margin_loss(
      loss::log_scores(fn(clamp_adversarial(x, delta))), goal);
}

}  // namespace

TEST_CASE("registry knows exactly the documented ids") {
  for (const auto& id : attacker_ids()) CHECK(make_attacker(id)->id() == id);
  CHECK_THROWS_AS(make_attacker("cma_es"), ConfigError);
  CHECK_THROWS_AS(make_attacker("square", {{"p0", 2.0}}), ConfigError);
  CHECK_THROWS_AS(make_attacker("nes", {{"population", 3}}), ConfigError);
}

TEST_CASE("first-query contract: adversarial init returns after one query") {
  Tensor x = Tensor::full({1, 2, 2}, 0.9);
  auto goal = AttackGoal::untargeted(0);
  Tensor good = Tensor::full({1, 2, 2}, -0.5);  // drives the sum negative
  for (const auto& id : attacker_ids()) {
    oracle::TargetOracle o(sum_fn(), 100);
    InitState init;
    init.delta0 = &good;
    Rng rng(1);
    auto r = make_attacker(id)->run(o, x, goal, 0.5, init, rng);
    CHECK(r.success);
    CHECK(r.queries_used == 1);
    CHECK(r.first_query_success);
    CHECK(o.ledger().used() == 1);
  }
}

TEST_CASE("zero budget: failure with zero queries and zero oracle calls") {
  Tensor x = Tensor::full({1, 2, 2}, 0.5);
  auto goal = AttackGoal::untargeted(0);
  for (const auto& id : attacker_ids()) {
    std::vector<Tensor> calls;
    oracle::TargetOracle o(sum_fn(&calls), 0);
    Rng rng(2);
    auto r = make_attacker(id)->run(o, x, goal, 0.1, {}, rng);
    CHECK_FALSE(r.success);
    CHECK(r.queries_used == 0);
    CHECK(calls.empty());
  }
}

TEST_CASE("budget discipline, ball constraint and exact accounting") {
  Tensor x = Tensor::full({1, 3, 3}, 0.55);
  auto goal = AttackGoal::untargeted(0);
  for (const auto& id : attacker_ids()) {
    for (std::uint64_t budget : {1ull, 7ull, 40ull}) {
      oracle::TargetOracle o(constant_fn(), budget);
      Rng rng(3);
      auto r = make_attacker(id)->run(o, x, goal, 0.05, {}, rng);
      CHECK_FALSE(r.success);  // oracle is unbeatable
      CHECK(r.queries_used == o.ledger().used());
      CHECK(r.queries_used <= budget);
      CHECK(r.final_delta.data.data.abs().maxCoeff() <= 0.05 + 1e-12);
    }
  }
}

TEST_CASE("replay determinism with identical seeds") {
  Tensor x = Tensor::full({1, 3, 3}, 0.55);
  auto goal = AttackGoal::untargeted(0);
  for (const auto& id : attacker_ids()) {
    std::vector<Tensor> q1, q2;
    {
      oracle::TargetOracle o(sum_fn(&q1), 30);
      Rng rng(42);
      make_attacker(id)->run(o, x, goal, 0.08, {}, rng);
    }
    {
      oracle::TargetOracle o(sum_fn(&q2), 30);
      Rng rng(42);
      make_attacker(id)->run(o, x, goal, 0.08, {}, rng);
    }
    REQUIRE(q1.size() == q2.size());
    for (std::size_t i = 0; i < q1.size(); ++i)
      CHECK(max_abs_diff(q1[i].data, q2[i].data) == 0.0);
  }
}

TEST_CASE("square reaches a flipping corner on a 2-pixel oracle") {
  // enumerate the corners first to prove one flips the label
  Tensor x = Tensor::full({1, 1, 2}, 0.5);
  auto goal = AttackGoal::untargeted(0);
  auto fn = sum_fn();
  const double eps = 0.4;
  bool flippable = false;
  for (double a : {-eps, eps})
    for (double b : {-eps, eps}) {
      Tensor d = Tensor::zeros({1, 1, 2});
      d.data << a, b;
      Arr s = fn(clamp_adversarial(x, d));
      if (is_success(s, goal)) flippable = true;
    }
  REQUIRE(flippable);

  oracle::TargetOracle o(fn, 64);
  Rng rng(5);
  auto r = make_attacker("square")->run(o, x, goal, eps, {}, rng);
  CHECK(r.success);
  CHECK(r.queries_used <= 64);
}

TEST_CASE("signhunter finds the optimal sign pattern within 2*dim queries") {
  // margin decreases exactly when delta moves along -w
  const int d = 8;
  Arr w(d);
  w << 4, -3, 2, 1, -2, 1.5, -1, 0.5;  // distinct magnitudes: no tie flips
  std::vector<Arr> rows = {w, Arr::Zero(d)};
  Tensor x = Tensor::full({1, 2, 4}, 0.5);
  auto fn = linear_fn(rows);
  auto goal = AttackGoal::untargeted(0);
  // eps window where only the exact corner sign(-w) flips the label:
  // margin0 - eps*sum|w| < 0 but one wrong sign (the weakest) stays positive
  const double eps = 0.105;
  oracle::TargetOracle o(fn, 2 * d);
  Rng rng(6);
  auto r = make_attacker("signhunter")->run(o, x, goal, eps, {}, rng);
  CHECK(r.success);
  CHECK(r.queries_used <= (std::uint64_t)(2 * d));
  // the winning pattern is sign(-w)
  for (int i = 0; i < d; ++i)
    CHECK(r.final_delta.data.data[i] * w[i] < 0);
}

TEST_CASE("simba accepted steps never increase the margin loss") {
  Tensor x = Tensor::full({1, 4, 4}, 0.52);
  auto goal = AttackGoal::untargeted(0);
  auto fn = sum_fn();
  oracle::TargetOracle o(fn, 60);
  Rng rng(7);
  auto attacker = make_attacker("simba_dct", {{"step", 0.05}});
  auto r = attacker->run(o, x, goal, 0.06, {}, rng);
  // overall progress: final kept state is never worse than the start
  Tensor zero = Tensor::zeros(x.shape);
  CHECK(query_margin(fn, x, r.final_delta.data, goal) <=
        query_margin(fn, x, zero, goal) + 1e-12);
  CHECK(r.final_delta.data.data.abs().maxCoeff() <= 0.06 + 1e-12);
}

TEST_CASE("nes charges exactly 2q per iteration plus the init query") {
  Tensor x = Tensor::full({1, 2, 2}, 0.55);
  auto goal = AttackGoal::untargeted(0);
  const int q = 4;
  const std::uint64_t iters = 3;
  oracle::TargetOracle o(constant_fn(), 1 + 2 * q * iters);
  Rng rng(8);
  auto r = make_attacker("nes", {{"population", q}})->run(o, x, goal, 0.1, {},
                                                          rng);
  CHECK_FALSE(r.success);
  CHECK(r.queries_used == 1 + 2 * q * iters);
}

TEST_CASE("nes gradient estimate aligns with an analytic gradient") {
  const long d = 16;
  Rng rng(11);
  Arr center = rng.gaussian_vec(d);
  auto loss_at = [&](const Arr& p) { return 0.5 * (p - center).square().sum(); };
  int aligned = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Arr mean = rng.gaussian_vec(d);
    Arr truth = mean - center;  // exact gradient of the quadratic
    Arr est = nes_gradient_estimate(loss_at, mean, 1e-3, 20, rng);
    double cos = (est * truth).sum() /
                 (std::sqrt(est.square().sum() * truth.square().sum()));
    if (cos > 0.5) ++aligned;
  }
  CHECK(aligned == 100);
}

TEST_CASE("nes makes progress on a smooth landscape") {
  Tensor x = Tensor::full({1, 3, 3}, 0.53);
  auto goal = AttackGoal::untargeted(0);
  auto fn = sum_fn();
  oracle::TargetOracle o(fn, 200);
  Rng rng(9);
  auto r = make_attacker("nes", {{"population", 4}})->run(o, x, goal, 0.04, {},
                                                          rng);
  Tensor zero = Tensor::zeros(x.shape);
  CHECK(query_margin(fn, x, r.final_delta.data, goal) <
        query_margin(fn, x, zero, goal));
}
