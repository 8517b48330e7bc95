#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mcg/ad/tape.hpp"
#include "mcg/rng.hpp"

using namespace mcg;
using ad::Tape;
using ad::Var;
using testing::fd_grad;
using testing::max_abs_diff;

namespace {

// Compare the tape gradient of a scalar-valued graph against central
// differences in its single differentiable leaf.
void check_grad(const std::function<Var(Tape&, Var)>& graph, const Arr& x0,
                double tol = 1e-6) {
  Tape t;
  Var in = t.input(x0);
  Var loss = graph(t, in);
  REQUIRE(t.val(loss).size() == 1);
  t.backward(loss);
  Arr analytic = t.grad(in);

  Arr numeric = fd_grad(
      [&](const Arr& x) {
        Tape s(false);
        return s.val(graph(s, s.input(x)))[0];
      },
      x0);
  CHECK(max_abs_diff(analytic, numeric) < tol);
}

Arr rnd(long n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng r(seed);
  Arr v(n);
  for (long i = 0; i < n; ++i) v[i] = r.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  Arr x = rnd(6, 1);
  Arr w = rnd(6, 2);

  check_grad([&](Tape& t, Var a) {
    Var c = t.constant(w);
    return t.sum(t.mul(t.add(a, c), t.sub(a, c)));
  }, x);
  check_grad([&](Tape& t, Var a) {
    Var c = t.constant(w.abs() + 0.5);
    return t.sum(t.div(a, c));
  }, x);
  check_grad([&](Tape& t, Var a) {
    return t.sum(t.div(t.constant(w), t.add_scalar(t.mul(a, a), 0.7)));
  }, x);
  check_grad([&](Tape& t, Var a) { return t.sum(t.neg(t.scale(a, 2.5))); }, x);
  check_grad([&](Tape& t, Var a) { return t.sum(t.exp_(a)); }, x);
  check_grad([&](Tape& t, Var a) {
    return t.sum(t.log_(t.add_scalar(t.mul(a, a), 0.3)));
  }, x);
  check_grad([&](Tape& t, Var a) { return t.sum(t.sigmoid(a)); }, x);
  check_grad([&](Tape& t, Var a) { return t.mean(t.mul(a, a)); }, x);
}

TEST_CASE("relu subgradient away from the kink") {
  Arr x = rnd(8, 3);
  for (long i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) < 0.05) x[i] = 0.1;
  check_grad([&](Tape& t, Var a) { return t.sum(t.relu(a)); }, x);
}

TEST_CASE("clamp_ste clamps the value but passes the gradient through") {
  Arr x(4);
  x << -2.0, -0.05, 0.05, 2.0;
  Tape t;
  Var in = t.input(x);
  Var out = t.clamp_ste(in, -0.1, 0.1);
  CHECK(t.val(out)[0] == doctest::Approx(-0.1));
  CHECK(t.val(out)[3] == doctest::Approx(0.1));
  CHECK(t.val(out)[2] == doctest::Approx(0.05));
  Var loss = t.sum(t.mul(out, t.constant(rnd(4, 9))));
  t.backward(loss);
  // straight-through: gradient as if clamp were identity
  CHECK(max_abs_diff(t.grad(in), t.val(t.constant(rnd(4, 9)))) < 1e-12);
}

TEST_CASE("structural op gradients match finite differences") {
  Arr x = rnd(8, 4);
  check_grad([&](Tape& t, Var a) {
    Var left = t.slice(a, 0, 4);
    Var right = t.slice(a, 4, 4);
    Var joined = t.concat({t.mul(left, right), left});
    return t.sum(t.mul(joined, t.constant(rnd(8, 5))));
  }, x);
  check_grad([&](Tape& t, Var a) {
    std::vector<long> perm = {7, 0, 6, 1, 5, 2, 4, 3};
    return t.sum(t.mul(t.permute(a, perm), t.constant(rnd(8, 6))));
  }, x);
  check_grad([&](Tape& t, Var a) {
    return t.sum(t.mul(t.reshape(a, {2, 2, 2}), t.constant(rnd(8, 7))));
  }, x);
  check_grad([&](Tape& t, Var a) { return t.gather1(t.mul(a, a), 3); }, x);
}

TEST_CASE("max_excluding value and subgradient") {
  Arr x(5);
  x << 0.3, 0.9, 0.1, 0.7, 0.2;
  Tape t;
  Var in = t.input(x);
  Var m = t.max_excluding(in, 1);  // exclude the global max
  CHECK(t.val(m)[0] == doctest::Approx(0.7));
  t.backward(m);
  Arr g = t.grad(in);
  CHECK(g[3] == doctest::Approx(1.0));
  CHECK(g.abs().sum() == doctest::Approx(1.0));
}

TEST_CASE("log_softmax gradient and normalization") {
  Arr x = rnd(5, 8, -2.0, 2.0);
  check_grad([&](Tape& t, Var a) {
    return t.sum(t.mul(t.log_softmax(a), t.constant(rnd(5, 9))));
  }, x);
  Tape t;
  Var lp = t.log_softmax(t.input(x));
  CHECK(t.val(lp).exp().sum() == doctest::Approx(1.0));
}

TEST_CASE("channel broadcast gradients") {
  const int C = 3, HW = 4;
  Arr v = rnd(C * HW, 10);
  Arr s = rnd(C, 11, 0.5, 1.5);
  Arr b = rnd(C, 12);
  // w.r.t. the per-channel parameters
  check_grad([&](Tape& t, Var p) {
    Var sc = t.slice(p, 0, C);
    Var bc = t.slice(p, C, C);
    Var vv = t.constant(v);
    return t.sum(t.mul(t.chan_add(t.chan_mul(vv, sc, C), bc, C),
                       t.constant(rnd(C * HW, 13))));
  }, [&] { Arr p(2 * C); p << s, b; return p; }());
  // w.r.t. the value
  check_grad([&](Tape& t, Var vv) {
    return t.sum(t.mul(t.chan_add(t.chan_mul(vv, t.constant(s), C),
                                  t.constant(b), C),
                       t.constant(rnd(C * HW, 13))));
  }, v);
}

TEST_CASE("1x1 mixing: values, logdet, gradients") {
  const int C = 3, HW = 4;
  Arr w(C * C);
  w << 1.2, 0.3, -0.1,
       0.0, 0.9, 0.2,
       0.4, -0.2, 1.1;
  Arr v = rnd(C * HW, 20);

  Tape t;
  Var wv = t.input(w);
  Var vv = t.input(v);
  Var y = t.mix_fwd(wv, vv, C);
  Var back = t.mix_inv(wv, y, C);
  CHECK(max_abs_diff(t.val(back), v) < 1e-10);

  // frozen determinant oracle: det computed by cofactor expansion
  // 1.2*(0.9*1.1 - 0.2*(-0.2)) - 0.3*(0*1.1 - 0.2*0.4) + (-0.1)*(0*(-0.2) - 0.9*0.4)
  const double det = 1.2 * (0.99 + 0.04) - 0.3 * (-0.08) - 0.1 * (-0.36);
  Var ld = t.mix_logdet(wv, C);
  CHECK(t.val(ld)[0] == doctest::Approx(std::log(det)));

  check_grad([&](Tape& s, Var a) {
    return s.sum(s.mul(s.mix_fwd(a, s.constant(v), C),
                       s.constant(rnd(C * HW, 21))));
  }, w);
  check_grad([&](Tape& s, Var a) {
    return s.sum(s.mul(s.mix_inv(a, s.constant(v), C),
                       s.constant(rnd(C * HW, 21))));
  }, w);
  check_grad([&](Tape& s, Var a) {
    return s.sum(s.mul(s.mix_inv(s.constant(w), a, C),
                       s.constant(rnd(C * HW, 22))));
  }, v);
  check_grad([&](Tape& s, Var a) { return s.mix_logdet(a, C); }, w, 1e-5);

  Arr singular = Arr::Zero(C * C);
  Tape t2;
  CHECK_THROWS_AS(t2.mix_logdet(t2.input(singular), C), NumericalError);
}

TEST_CASE("linear layer gradients") {
  const int in = 4, out = 3;
  Arr w = rnd(out * in, 30);
  Arr b = rnd(out, 31);
  Arr x = rnd(in, 32);
  check_grad([&](Tape& t, Var a) {
    return t.sum(t.mul(t.linear(a, t.constant(b), t.constant(x)),
                       t.constant(rnd(out, 33))));
  }, w);
  check_grad([&](Tape& t, Var a) {
    return t.sum(t.mul(t.linear(t.constant(w), t.constant(b), a),
                       t.constant(rnd(out, 33))));
  }, x);
  check_grad([&](Tape& t, Var a) {
    return t.sum(t.mul(t.linear(t.constant(w), a, t.constant(x)),
                       t.constant(rnd(out, 33))));
  }, b);
}

TEST_CASE("conv2d matches a hand-computed value and finite differences") {
  // 1x3x3 input, 1 output channel, 3x3 kernel, stride 1, pad 1:
  // center output = full correlation of kernel with image
  Arr x(9);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  Arr w = Arr::Zero(9);
  w[4] = 1.0;  // identity kernel
  Arr b = Arr::Zero(1);
  Tape t;
  Var y = t.conv2d(t.constant(x, {1, 3, 3}), t.constant(w, {1, 9}),
                   t.constant(b), 3, 3, 1, 1);
  CHECK(max_abs_diff(t.val(y), x) < 1e-12);

  const int Cin = 2, H = 4, W = 4, Cout = 3;
  Arr xi = rnd(Cin * H * W, 40);
  Arr wi = rnd(Cout * Cin * 9, 41);
  Arr bi = rnd(Cout, 42);
  auto probe = rnd(Cout * 2 * 2, 43);  // stride-2 output is 2x2
  check_grad([&](Tape& s, Var a) {
    return s.sum(s.mul(s.conv2d(s.reshape(a, {Cin, H, W}),
                                s.constant(wi, {Cout, Cin * 9}),
                                s.constant(bi), 3, 3, 2, 1),
                       s.constant(probe)));
  }, xi);
  check_grad([&](Tape& s, Var a) {
    return s.sum(s.mul(s.conv2d(s.constant(xi, {Cin, H, W}),
                                s.reshape(a, {Cout, Cin * 9}), s.constant(bi),
                                3, 3, 2, 1),
                       s.constant(probe)));
  }, wi);
  check_grad([&](Tape& s, Var a) {
    return s.sum(s.mul(s.conv2d(s.constant(xi, {Cin, H, W}),
                                s.constant(wi, {Cout, Cin * 9}), a,
                                3, 3, 2, 1),
                       s.constant(probe)));
  }, bi);
}

TEST_CASE("constants receive no gradient; untouched leaves read as zero") {
  Tape t;
  Var a = t.input(rnd(3, 50));
  Var c = t.constant(rnd(3, 51));
  Var unused = t.input(rnd(3, 52));
  Var loss = t.sum(t.mul(a, c));
  t.backward(loss);
  CHECK(t.grad(a).size() == 3);
  CHECK(t.grad(unused).abs().maxCoeff() == 0.0);
}

TEST_CASE("grad-disabled tape evaluates but refuses backward") {
  Tape t(false);
  Var a = t.input(rnd(3, 60));
  Var loss = t.sum(a);
  CHECK(t.val(loss)[0] == doctest::Approx(t.val(a).sum()));
}
