#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mcg/flow/dct.hpp"
#include "mcg/rng.hpp"

using namespace mcg;
using namespace mcg::flow;
using testing::max_abs_diff;

namespace {
Tensor random_image(int C, int H, int W, std::uint64_t seed) {
  Rng r(seed);
  Tensor t = Tensor::zeros({C, H, W});
  for (long i = 0; i < t.numel(); ++i) t.data[i] = r.uniform(0.0, 1.0);
  return t;
}
}  // namespace

TEST_CASE("basis is orthonormal") {
  const auto& d = dct_matrix(8);
  Eigen::MatrixXd g = d * d.transpose();
  CHECK((g - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("constant image concentrates in the DC coefficient") {
  const double c = 0.37;
  const int H = 8, W = 8;
  Tensor x = Tensor::full({1, H, W}, c);
  Tensor f = dct2(x);
  // orthonormal transform of a constant: DC = c * sqrt(H*W), rest zero
  CHECK(f.at(0, 0, 0) == doctest::Approx(c * std::sqrt((double)H * W)));
  f.at(0, 0, 0) = 0.0;
  CHECK(f.data.abs().maxCoeff() < 1e-12);
}

TEST_CASE("transform round-trips") {
  Tensor x = random_image(3, 16, 12, 7);
  CHECK(max_abs_diff(idct2(dct2(x)).data, x.data) < 1e-10);
}

TEST_CASE("energy is preserved (Parseval)") {
  Tensor x = random_image(2, 8, 8, 11);
  CHECK(dct2(x).data.square().sum() ==
        doctest::Approx(x.data.square().sum()));
}

TEST_CASE("down/up round-trips band-limited signals exactly") {
  // start from coefficients supported only in the low-frequency block
  Tensor coeffs = random_image(1, 4, 4, 13);
  Tensor img = dct_up(coeffs, 8, 8);
  Tensor back = dct_down(img, 2);
  CHECK(max_abs_diff(back.data, coeffs.data) < 1e-10);
  CHECK_THROWS_AS(dct_down(img, 3), ShapeError);
  CHECK_THROWS_AS(dct_down(img, 0), ConfigError);
}

TEST_CASE("lowpass is a projection") {
  Tensor x = random_image(1, 8, 8, 17);
  // tame the image so the [0,1] clamp is inactive and the projection exact
  x.data = 0.4 + 0.2 * x.data;
  Tensor once = dct_lowpass(x, 0.25);
  Tensor twice = dct_lowpass(once, 0.25);
  CHECK(max_abs_diff(once.data, twice.data) < 1e-10);
  CHECK(once.data.minCoeff() >= 0.0);
  CHECK(once.data.maxCoeff() <= 1.0);
  CHECK_THROWS_AS(dct_lowpass(x, 0.0), ConfigError);
  CHECK_THROWS_AS(dct_lowpass(x, 1.5), ConfigError);
}

TEST_CASE("lowpass with full keep fraction is identity inside the box") {
  Tensor x = random_image(2, 8, 8, 19);
  CHECK(max_abs_diff(dct_lowpass(x, 1.0).data, x.data) < 1e-10);
}
