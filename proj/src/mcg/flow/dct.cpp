#include "mcg/flow/dct.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace mcg::flow {

namespace {
using Mat = Eigen::MatrixXd;

Mat channel_view(const Tensor& t, int c) {
  int H = t.height(), W = t.width();
  Mat m(H, W);
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) m(h, w) = t.at(c, h, w);
  return m;
}

void channel_store(Tensor& t, int c, const Mat& m) {
  for (int h = 0; h < t.height(); ++h)
    for (int w = 0; w < t.width(); ++w) t.at(c, h, w) = m(h, w);
}
}  // namespace

const Mat& dct_matrix(int n) {
  static std::map<int, Mat> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Mat d(n, n);
  const double pi = std::acos(-1.0);
  for (int k = 0; k < n; ++k) {
    double ck = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int j = 0; j < n; ++j)
      d(k, j) = ck * std::cos(pi * (2 * j + 1) * k / (2.0 * n));
  }
  return cache.emplace(n, std::move(d)).first->second;
}

Tensor dct2(const Tensor& x) {
  const Mat& dh = dct_matrix(x.height());
  const Mat& dw = dct_matrix(x.width());
  Tensor out = Tensor::zeros(x.shape);
  for (int c = 0; c < x.channels(); ++c)
    channel_store(out, c, dh * channel_view(x, c) * dw.transpose());
  return out;
}

Tensor idct2(const Tensor& coeffs) {
  const Mat& dh = dct_matrix(coeffs.height());
  const Mat& dw = dct_matrix(coeffs.width());
  Tensor out = Tensor::zeros(coeffs.shape);
  for (int c = 0; c < coeffs.channels(); ++c)
    channel_store(out, c, dh.transpose() * channel_view(coeffs, c) * dw);
  return out;
}

Tensor dct_down(const Tensor& x, int factor) {
  if (factor < 1) throw ConfigError("dct_down: factor < 1");
  int H = x.height(), W = x.width();
  if (H % factor != 0 || W % factor != 0)
    throw ShapeError("dct_down: dims not divisible by factor");
  Tensor full = dct2(x);
  int ho = H / factor, wo = W / factor;
  Tensor out = Tensor::zeros({x.channels(), ho, wo});
  for (int c = 0; c < x.channels(); ++c)
    for (int h = 0; h < ho; ++h)
      for (int w = 0; w < wo; ++w) out.at(c, h, w) = full.at(c, h, w);
  return out;
}

Tensor dct_up(const Tensor& coeffs, int target_h, int target_w) {
  if (coeffs.height() > target_h || coeffs.width() > target_w)
    throw ShapeError("dct_up: coefficient dims exceed target");
  Tensor full = Tensor::zeros({coeffs.channels(), target_h, target_w});
  for (int c = 0; c < coeffs.channels(); ++c)
    for (int h = 0; h < coeffs.height(); ++h)
      for (int w = 0; w < coeffs.width(); ++w)
        full.at(c, h, w) = coeffs.at(c, h, w);
  return idct2(full);
}

Tensor dct_lowpass(const Tensor& x, double keep_fraction) {
  if (keep_fraction <= 0.0 || keep_fraction > 1.0)
    throw ConfigError("dct_lowpass: keep_fraction outside (0,1]");
  int H = x.height(), W = x.width();
  int kh = std::max(1, (int)std::lround(H * std::sqrt(keep_fraction)));
  int kw = std::max(1, (int)std::lround(W * std::sqrt(keep_fraction)));
  kh = std::min(kh, H);
  kw = std::min(kw, W);
  Tensor coeffs = dct2(x);
  for (int c = 0; c < x.channels(); ++c)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w)
        if (h >= kh || w >= kw) coeffs.at(c, h, w) = 0.0;
  Tensor out = idct2(coeffs);
  out.data = out.data.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

}  // namespace mcg::flow
