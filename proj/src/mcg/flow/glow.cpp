#include "mcg/flow/glow.hpp"

#include <cmath>

#include "mcg/flow/dct.hpp"

namespace mcg::flow {

namespace {
const double kLn2 = std::log(2.0);
const double kLn2Pi = std::log(2.0 * std::acos(-1.0));
}  // namespace

void FlowConfig::validate() const {
  if (image_channels < 1 || image_height < 1 || image_width < 1)
    throw ConfigError("flow: bad image shape");
  if (dct_factor < 1) throw ConfigError("flow: dct_factor < 1");
  if (image_height % dct_factor != 0 || image_width % dct_factor != 0)
    throw ConfigError("flow: image dims not divisible by dct_factor");
  if (blocks < 1 || steps < 1) throw ConfigError("flow: need >= 1 block/step");
  if (hidden < 1 || cond_channels < 1)
    throw ConfigError("flow: bad net widths");
  if (epsilon < 0) throw ConfigError("flow: epsilon < 0");
  int div = 1 << blocks;
  if (flow_height() % div != 0 || flow_width() % div != 0)
    throw ConfigError("flow: spatial dims not divisible by 2^blocks");
}

// ---- parameter container ----

namespace {
// Channels entering block b (before its squeeze).
int block_in_channels(const FlowConfig& cfg, int b) {
  return cfg.flow_channels() << b;
}
}  // namespace

void FlowParams::for_each(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("gaussian/mu", mu);
  fn("gaussian/log_sigma", log_sigma);
  for (int b = 0; b < (int)blocks.size(); ++b) {
    for (int s = 0; s < (int)blocks[b].steps.size(); ++s) {
      auto pre = "mapping/block" + std::to_string(b) + "/step" +
                 std::to_string(s) + "/";
      auto& st = blocks[b].steps[s];
      fn(pre + "actnorm/log_s", st.act_log_s);
      fn(pre + "actnorm/bias", st.act_b);
      fn(pre + "mix/w", st.mix_w);
      fn(pre + "coupling/w1", st.coup.w1);
      fn(pre + "coupling/b1", st.coup.b1);
      fn(pre + "coupling/w2", st.coup.w2);
      fn(pre + "coupling/b2", st.coup.b2);
    }
  }
  for (int i = 0; i < (int)cond.w.size(); ++i) {
    auto pre = "conditioner/conv" + std::to_string(i) + "/";
    fn(pre + "w", cond.w[i]);
    fn(pre + "b", cond.b[i]);
  }
}

void FlowParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<FlowParams*>(this)->for_each(
      [&](const std::string& k, Tensor& t) { fn(k, t); });
}

void FlowParams::for_each_in_scope(
    AdaptScope scope,
    const std::function<void(const std::string&, Tensor&)>& fn) {
  for_each([&](const std::string& k, Tensor& t) {
    if (scope == AdaptScope::all || k.rfind("gaussian/", 0) == 0) fn(k, t);
  });
}

double FlowParams::checksum() const {
  double acc = 0.0;
  for_each([&](const std::string&, const Tensor& t) {
    acc += t.data.sum() + t.data.square().sum();
  });
  return acc;
}

FlowParams make_flow(const FlowConfig& cfg, Rng& rng, bool identity_init) {
  cfg.validate();
  FlowParams fp;
  fp.cfg = cfg;
  long d = cfg.latent_dim();
  fp.mu = Tensor::zeros({(int)d});
  fp.log_sigma = Tensor::zeros({(int)d});

  auto he_conv = [&](int out_ch, int in_ch) {
    Tensor w = Tensor::zeros({out_ch, in_ch * 9});
    double std = std::sqrt(2.0 / (in_ch * 9));
    for (long i = 0; i < w.numel(); ++i) w.data[i] = rng.gaussian(0.0, std);
    return w;
  };

  fp.blocks.resize(cfg.blocks);
  for (int b = 0; b < cfg.blocks; ++b) {
    int C = 4 * block_in_channels(cfg, b);  // channels after squeeze
    int half = C / 2;
    fp.blocks[b].steps.resize(cfg.steps);
    for (int s = 0; s < cfg.steps; ++s) {
      auto& st = fp.blocks[b].steps[s];
      st.act_log_s = Tensor::zeros({C});
      st.act_b = Tensor::zeros({C});
      st.mix_w = Tensor::zeros({C, C});
      if (identity_init) {
        for (int i = 0; i < C; ++i) st.mix_w.data[(long)i * C + i] = 1.0;
      } else {
        // random rotation: orthogonal factor of a Gaussian matrix
        Eigen::MatrixXd g(C, C);
        for (int i = 0; i < C; ++i)
          for (int j = 0; j < C; ++j) g(i, j) = rng.gaussian(0.0, 1.0);
        Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g)
                                .householderQ();
        for (int i = 0; i < C; ++i)
          for (int j = 0; j < C; ++j) st.mix_w.data[(long)i * C + j] = q(i, j);
      }
      st.coup.w1 = he_conv(cfg.hidden, half + cfg.cond_channels);
      st.coup.b1 = Tensor::zeros({cfg.hidden});
      st.coup.w2 = Tensor::zeros({2 * half, cfg.hidden * 9});  // identity start
      st.coup.b2 = Tensor::zeros({2 * half});
    }
  }

  fp.cond.w.resize(cfg.blocks);
  fp.cond.b.resize(cfg.blocks);
  for (int i = 0; i < cfg.blocks; ++i) {
    int in_ch = i == 0 ? cfg.flow_channels() : cfg.cond_channels;
    fp.cond.w[i] = he_conv(cfg.cond_channels, in_ch);
    fp.cond.b[i] = Tensor::zeros({cfg.cond_channels});
  }
  return fp;
}

// ---- tape graph ----

FlowTapeParams params_on_tape(ad::Tape& t, const FlowParams& fp,
                              AdaptScope scope) {
  if (fp.log_sigma.data.minCoeff() < -20.0)
    throw NumericalError("flow: collapsed latent scale");
  bool map_live = scope == AdaptScope::all;
  auto as_var = [&](const Tensor& p, bool live) {
    return live ? t.input(p.data, p.shape) : t.constant(p.data, p.shape);
  };
  FlowTapeParams tp;
  tp.mu = as_var(fp.mu, true);
  tp.log_sigma = as_var(fp.log_sigma, true);
  tp.blocks.resize(fp.blocks.size());
  for (int b = 0; b < (int)fp.blocks.size(); ++b) {
    for (const auto& st : fp.blocks[b].steps) {
      FlowTapeParams::Step s;
      s.act_log_s = as_var(st.act_log_s, map_live);
      s.act_b = as_var(st.act_b, map_live);
      s.mix_w = as_var(st.mix_w, map_live);
      s.w1 = as_var(st.coup.w1, map_live);
      s.b1 = as_var(st.coup.b1, map_live);
      s.w2 = as_var(st.coup.w2, map_live);
      s.b2 = as_var(st.coup.b2, map_live);
      tp.blocks[b].push_back(s);
    }
  }
  for (int i = 0; i < (int)fp.cond.w.size(); ++i) {
    tp.cond_w.push_back(as_var(fp.cond.w[i], map_live));
    tp.cond_b.push_back(as_var(fp.cond.b[i], map_live));
  }
  return tp;
}

std::vector<ad::Var> condition_features(ad::Tape& t, const FlowConfig& cfg,
                                        const FlowTapeParams& tp,
                                        ad::Var x_flow) {
  std::vector<ad::Var> feats;
  ad::Var cur = x_flow;
  for (int i = 0; i < cfg.blocks; ++i) {
    cur = t.relu(t.conv2d(cur, tp.cond_w[i], tp.cond_b[i], 3, 3, 2, 1));
    feats.push_back(cur);
  }
  return feats;
}

namespace {

// out[(4c + 2dy + dx), h, w] = in[c, 2h+dy, 2w+dx]
std::vector<long> squeeze_perm(int C, int H, int W) {
  std::vector<long> perm((long)C * H * W);
  int ho = H / 2, wo = W / 2;
  long i = 0;
  for (int c = 0; c < C; ++c)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        for (int h = 0; h < ho; ++h)
          for (int w = 0; w < wo; ++w)
            perm[i++] = ((long)c * H + (2 * h + dy)) * W + (2 * w + dx);
  return perm;
}

std::vector<long> invert_perm(const std::vector<long>& p) {
  std::vector<long> inv(p.size());
  for (long i = 0; i < (long)p.size(); ++i) inv[p[i]] = i;
  return inv;
}

struct StepCtx {
  ad::Tape& t;
  const FlowTapeParams::Step& sp;
  ad::Var cond;
  int C, h, w;
  long hw() const { return (long)h * w; }
};

// Affine scale bounded to [0.5, 2.0]; exactly 1.0 when raw is zero.
ad::Var coupling_nets(StepCtx& c, ad::Var ra, ad::Var& scale, ad::Var& shift) {
  auto& t = c.t;
  int half = c.C / 2;
  ad::Var net_in =
      t.concat({ra, c.cond}, {half + (int)t.shape(c.cond)[0], c.h, c.w});
  ad::Var h1 = t.relu(t.conv2d(net_in, c.sp.w1, c.sp.b1, 3, 3, 1, 1));
  ad::Var raw = t.conv2d(h1, c.sp.w2, c.sp.b2, 3, 3, 1, 1);
  ad::Var s_raw = t.slice(raw, 0, half * c.hw(), {half, c.h, c.w});
  shift = t.slice(raw, half * c.hw(), half * c.hw(), {half, c.h, c.w});
  scale = t.add_scalar(t.scale(t.sigmoid(t.add_scalar(s_raw, -kLn2)), 1.5),
                       0.5);
  return net_in;
}

ad::Var step_forward(StepCtx c, ad::Var v, ad::Var& logdet) {
  auto& t = c.t;
  int half = c.C / 2;
  v = t.chan_add(t.chan_mul(v, t.exp_(c.sp.act_log_s), c.C), c.sp.act_b, c.C);
  logdet = t.add(logdet, t.scale(t.sum(c.sp.act_log_s), (double)c.hw()));
  v = t.mix_fwd(c.sp.mix_w, v, c.C);
  logdet =
      t.add(logdet, t.scale(t.mix_logdet(c.sp.mix_w, c.C), (double)c.hw()));
  ad::Var ra = t.slice(v, 0, half * c.hw(), {half, c.h, c.w});
  ad::Var rb = t.slice(v, half * c.hw(), half * c.hw(), {half, c.h, c.w});
  ad::Var scale_v, shift_v;
  coupling_nets(c, ra, scale_v, shift_v);
  ad::Var rb2 = t.add(t.mul(scale_v, rb), shift_v);
  logdet = t.add(logdet, t.sum(t.log_(scale_v)));
  return t.concat({ra, rb2}, {c.C, c.h, c.w});
}

ad::Var step_inverse(StepCtx c, ad::Var v, ad::Var& logdet) {
  auto& t = c.t;
  int half = c.C / 2;
  ad::Var ra = t.slice(v, 0, half * c.hw(), {half, c.h, c.w});
  ad::Var rb2 = t.slice(v, half * c.hw(), half * c.hw(), {half, c.h, c.w});
  ad::Var scale_v, shift_v;
  coupling_nets(c, ra, scale_v, shift_v);
  ad::Var rb = t.div(t.sub(rb2, shift_v), scale_v);
  logdet = t.sub(logdet, t.sum(t.log_(scale_v)));
  v = t.concat({ra, rb}, {c.C, c.h, c.w});
  v = t.mix_inv(c.sp.mix_w, v, c.C);
  logdet =
      t.sub(logdet, t.scale(t.mix_logdet(c.sp.mix_w, c.C), (double)c.hw()));
  v = t.chan_mul(t.chan_add(v, t.neg(c.sp.act_b), c.C),
                 t.exp_(t.neg(c.sp.act_log_s)), c.C);
  logdet = t.sub(logdet, t.scale(t.sum(c.sp.act_log_s), (double)c.hw()));
  return v;
}

}  // namespace

FlowEval encode_t(ad::Tape& t, const FlowConfig& cfg, const FlowTapeParams& tp,
                  ad::Var delta_flow, const std::vector<ad::Var>& cond_feats) {
  ad::Var logdet = t.constant_scalar(0.0);
  ad::Var cur = delta_flow;
  std::vector<ad::Var> z_parts;
  int C = cfg.flow_channels(), H = cfg.flow_height(), W = cfg.flow_width();
  for (int b = 0; b < cfg.blocks; ++b) {
    cur = t.permute(cur, squeeze_perm(C, H, W), {4 * C, H / 2, W / 2});
    C *= 4;
    H /= 2;
    W /= 2;
    for (int s = 0; s < cfg.steps; ++s)
      cur = step_forward({t, tp.blocks[b][s], cond_feats[b], C, H, W}, cur,
                         logdet);
    if (b + 1 < cfg.blocks) {
      int half = C / 2;
      long hw = (long)H * W;
      z_parts.push_back(t.slice(cur, 0, half * hw, {half, H, W}));
      cur = t.slice(cur, half * hw, half * hw, {half, H, W});
      C = half;
    }
  }
  z_parts.push_back(cur);
  ad::Var z = t.concat(z_parts, {(int)cfg.latent_dim()});
  return {z, logdet};
}

FlowEval decode_t(ad::Tape& t, const FlowConfig& cfg, const FlowTapeParams& tp,
                  ad::Var z, const std::vector<ad::Var>& cond_feats) {
  ad::Var logdet = t.constant_scalar(0.0);
  // chunk offsets mirror the encode-side splits
  std::vector<long> offsets(cfg.blocks), lens(cfg.blocks);
  std::vector<int> chans(cfg.blocks), hs(cfg.blocks), ws(cfg.blocks);
  {
    long off = 0;
    for (int b = 0; b < cfg.blocks; ++b) {
      int C = 4 * block_in_channels(cfg, b);
      int H = cfg.flow_height() >> (b + 1), W = cfg.flow_width() >> (b + 1);
      int keep = b + 1 < cfg.blocks ? C / 2 : C;
      chans[b] = keep;
      hs[b] = H;
      ws[b] = W;
      offsets[b] = off;
      lens[b] = (long)keep * H * W;
      off += lens[b];
    }
  }
  ad::Var cur{};
  for (int b = cfg.blocks - 1; b >= 0; --b) {
    ad::Var chunk = t.slice(z, offsets[b], lens[b], {chans[b], hs[b], ws[b]});
    int C = 4 * block_in_channels(cfg, b);
    cur = b + 1 < cfg.blocks ? t.concat({chunk, cur}, {C, hs[b], ws[b]})
                             : chunk;
    for (int s = cfg.steps - 1; s >= 0; --s)
      cur = step_inverse({t, tp.blocks[b][s], cond_feats[b], C, hs[b], ws[b]},
                         cur, logdet);
    int Cin = block_in_channels(cfg, b);
    cur = t.permute(cur, invert_perm(squeeze_perm(Cin, hs[b] * 2, ws[b] * 2)),
                    {Cin, hs[b] * 2, ws[b] * 2});
  }
  return {cur, logdet};
}

namespace {

// Zero-pad low-frequency coefficients and inverse-transform, as a constant
// linear map on the tape (per channel).
ad::Var dct_up_t(ad::Tape& t, const FlowConfig& cfg, ad::Var coeffs) {
  int C = cfg.flow_channels();
  int h = cfg.flow_height(), w = cfg.flow_width();
  int H = cfg.image_height, W = cfg.image_width;
  const auto& dh = dct_matrix(H);
  const auto& dw = dct_matrix(W);
  // out[yH*W + xW] = sum_{a<h,b<w} dh(a,y) * dw(b,x) * in[a*w + b]
  Arr k((long)H * W * h * w);
  long i = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int a = 0; a < h; ++a)
        for (int b = 0; b < w; ++b) k[i++] = dh(a, y) * dw(b, x);
  ad::Var kw = t.constant(std::move(k), {H * W, h * w});
  ad::Var kb = t.constant(Arr::Zero((long)H * W), {H * W});
  std::vector<ad::Var> chans;
  for (int c = 0; c < C; ++c) {
    ad::Var cc = t.slice(coeffs, (long)c * h * w, (long)h * w);
    chans.push_back(t.linear(kw, kb, cc));
  }
  return t.concat(chans, {C, H, W});
}

}  // namespace

ad::Var sample_delta_t(ad::Tape& t, const FlowConfig& cfg,
                       const FlowTapeParams& tp, const Arr& noise,
                       double temperature,
                       const std::vector<ad::Var>& cond_feats) {
  if (noise.size() != cfg.latent_dim())
    throw ShapeError("sample_delta_t: noise size mismatch");
  ad::Var eps = t.constant(noise, {(int)cfg.latent_dim()});
  ad::Var z = t.add(
      tp.mu, t.scale(t.mul(t.exp_(tp.log_sigma), eps), temperature));
  ad::Var d = decode_t(t, cfg, tp, z, cond_feats).out;
  if (cfg.dct_factor > 1) d = dct_up_t(t, cfg, d);
  d = t.reshape(d, {cfg.image_channels, cfg.image_height, cfg.image_width});
  // epsilon projection with identity gradient
  return t.clamp_ste(d, -cfg.epsilon, cfg.epsilon);
}

ad::Var log_likelihood_t(ad::Tape& t, const FlowConfig& cfg,
                         const FlowTapeParams& tp, ad::Var delta_flow,
                         const std::vector<ad::Var>& cond_feats) {
  FlowEval enc = encode_t(t, cfg, tp, delta_flow, cond_feats);
  ad::Var e = t.mul(t.sub(enc.out, tp.mu), t.exp_(t.neg(tp.log_sigma)));
  ad::Var quad = t.scale(t.sum(t.mul(e, e)), -0.5);
  ad::Var norm = t.add_scalar(t.neg(t.sum(tp.log_sigma)),
                              -0.5 * cfg.latent_dim() * kLn2Pi);
  return t.add(t.add(quad, norm), enc.logdet);
}

// ---- plain API ----

Tensor to_flow_space(const FlowConfig& cfg, const Tensor& x) {
  if (x.channels() != cfg.image_channels || x.height() != cfg.image_height ||
      x.width() != cfg.image_width)
    throw ShapeError("flow: conditioning image shape mismatch");
  return cfg.dct_factor == 1 ? x : dct_down(x, cfg.dct_factor);
}

namespace {

struct PlainCtx {
  ad::Tape t{false};
  FlowTapeParams tp;
  std::vector<ad::Var> feats;
};

PlainCtx plain_ctx(const FlowParams& fp, const Tensor& x) {
  PlainCtx c;
  c.tp = params_on_tape(c.t, fp);
  Tensor xf = to_flow_space(fp.cfg, x);
  c.feats = condition_features(c.t, fp.cfg, c.tp,
                               c.t.constant(xf.data, xf.shape));
  return c;
}

}  // namespace

std::pair<Tensor, double> flow_forward(const Tensor& z_flat, const Tensor& x,
                                       const FlowParams& params) {
  const auto& cfg = params.cfg;
  if (z_flat.numel() != cfg.latent_dim())
    throw ShapeError("flow_forward: latent size mismatch");
  require_finite(z_flat, "flow_forward");
  PlainCtx c = plain_ctx(params, x);
  ad::Var z = c.t.constant(z_flat.data, {(int)cfg.latent_dim()});
  FlowEval dec = decode_t(c.t, cfg, c.tp, z, c.feats);
  Tensor df({cfg.flow_channels(), cfg.flow_height(), cfg.flow_width()},
            c.t.val(dec.out));
  Tensor delta = cfg.dct_factor == 1
                     ? df
                     : dct_up(df, cfg.image_height, cfg.image_width);
  return {delta, c.t.val(dec.logdet)[0]};
}

std::pair<Tensor, double> flow_inverse(const Tensor& delta, const Tensor& x,
                                       const FlowParams& params) {
  const auto& cfg = params.cfg;
  require_finite(delta, "flow_inverse");
  Tensor df = cfg.dct_factor == 1 ? delta : dct_down(delta, cfg.dct_factor);
  if (df.numel() != cfg.latent_dim())
    throw ShapeError("flow_inverse: perturbation size mismatch");
  PlainCtx c = plain_ctx(params, x);
  FlowEval enc = encode_t(c.t, cfg, c.tp, c.t.constant(df.data, df.shape),
                          c.feats);
  return {Tensor({(int)cfg.latent_dim()}, c.t.val(enc.out)),
          c.t.val(enc.logdet)[0]};
}

double log_likelihood(const Tensor& delta, const Tensor& x,
                      const FlowParams& params) {
  auto [z, logdet_inv] = flow_inverse(delta, x, params);
  const Arr& mu = params.mu.data;
  const Arr& ls = params.log_sigma.data;
  Arr e = (z.data - mu) * (-ls).exp();
  double lp = -0.5 * e.square().sum() - ls.sum() -
              0.5 * params.cfg.latent_dim() * kLn2Pi;
  double out = lp + logdet_inv;
  if (!std::isfinite(out)) throw NumericalError("flow: non-finite likelihood");
  return out;
}

Perturbation sample(const Tensor& x, const FlowParams& params,
                    double temperature, Rng& rng) {
  const auto& cfg = params.cfg;
  if (temperature < 0) throw ConfigError("flow sample: temperature < 0");
  long d = cfg.latent_dim();
  Tensor z({(int)d}, params.mu.data);
  if (temperature > 0)
    for (long i = 0; i < d; ++i)
      z.data[i] += temperature * std::exp(params.log_sigma.data[i]) *
                   rng.gaussian(0.0, 1.0);
  Tensor delta = flow_forward(z, x, params).first;
  return project_linf(Perturbation(delta, cfg.epsilon), cfg.epsilon);
}

Perturbation mode(const Tensor& x, const FlowParams& params) {
  Rng rng(0);
  return sample(x, params, 0.0, rng);
}

}  // namespace mcg::flow
