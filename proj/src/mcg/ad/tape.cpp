#include "mcg/ad/tape.hpp"

#include <cmath>
#include <memory>

namespace mcg::ad {

namespace {
using Mat = Eigen::MatrixXd;
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;
}  // namespace

Var Tape::push(Arr val, std::vector<int> shape, bool rg,
               std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  n.shape = std::move(shape);
  n.rg = rg && grad_enabled_;
  if (n.rg) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{(int)nodes_.size() - 1};
}

Var Tape::input(Arr v, std::vector<int> shape) {
  return push(std::move(v), std::move(shape), true, nullptr);
}

Var Tape::constant(Arr v, std::vector<int> shape) {
  return push(std::move(v), std::move(shape), false, nullptr);
}

Var Tape::constant_scalar(double v) {
  return constant(Arr::Constant(1, v));
}

const Arr& Tape::grad(Var v) const {
  static const Arr empty;
  if (grads_.empty()) throw NumericalError("grad() before backward()");
  if (grads_[v.idx].size() == 0) {
    // Untouched leaves (frozen params, constants) report exact zeros.
    const_cast<Tape*>(this)->grads_[v.idx] = Arr::Zero(nodes_[v.idx].val.size());
  }
  return grads_[v.idx];
}

void Tape::backward(Var loss) {
  if (!grad_enabled_) throw NumericalError("backward on a no-grad tape");
  if (nodes_[loss.idx].val.size() != 1)
    throw NumericalError("backward target must be scalar");
  grads_.assign(nodes_.size(), Arr());
  grads_[loss.idx] = Arr::Constant(1, 1.0);
  for (int i = loss.idx; i >= 0; --i) {
    if (nodes_[i].back && grads_[i].size() != 0) nodes_[i].back(*this);
  }
}

void Tape::acc(int idx, const Arr& g) {
  if (!nodes_[idx].rg) return;
  if (grads_[idx].size() == 0)
    grads_[idx] = Arr::Zero(nodes_[idx].val.size());
  grads_[idx] += g;
}

// ---------------------------------------------------------------- elementwise

Var Tape::add(Var a, Var b) {
  int ia = a.idx, ib = b.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val + nodes_[ib].val, nodes_[ia].shape,
              rg(a) || rg(b), [ia, ib, io](Tape& t) {
                const Arr& g = t.grads_[io];
                t.acc(ia, g);
                t.acc(ib, g);
              });
}

Var Tape::sub(Var a, Var b) {
  int ia = a.idx, ib = b.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val - nodes_[ib].val, nodes_[ia].shape,
              rg(a) || rg(b), [ia, ib, io](Tape& t) {
                const Arr& g = t.grads_[io];
                t.acc(ia, g);
                t.acc(ib, -g);
              });
}

Var Tape::mul(Var a, Var b) {
  int ia = a.idx, ib = b.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val * nodes_[ib].val, nodes_[ia].shape,
              rg(a) || rg(b), [ia, ib, io](Tape& t) {
                const Arr& g = t.grads_[io];
                t.acc(ia, g * t.nodes_[ib].val);
                t.acc(ib, g * t.nodes_[ia].val);
              });
}

Var Tape::div(Var a, Var b) {
  int ia = a.idx, ib = b.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val / nodes_[ib].val, nodes_[ia].shape,
              rg(a) || rg(b), [ia, ib, io](Tape& t) {
                const Arr& g = t.grads_[io];
                const Arr& bv = t.nodes_[ib].val;
                t.acc(ia, g / bv);
                t.acc(ib, -g * t.nodes_[io].val / bv);
              });
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double c) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val * c, nodes_[ia].shape, rg(a),
              [ia, io, c](Tape& t) { t.acc(ia, t.grads_[io] * c); });
}

Var Tape::add_scalar(Var a, double c) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val + c, nodes_[ia].shape, rg(a),
              [ia, io](Tape& t) { t.acc(ia, t.grads_[io]); });
}

Var Tape::exp_(Var a) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val.exp(), nodes_[ia].shape, rg(a),
              [ia, io](Tape& t) {
                t.acc(ia, t.grads_[io] * t.nodes_[io].val);
              });
}

Var Tape::log_(Var a) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val.log(), nodes_[ia].shape, rg(a),
              [ia, io](Tape& t) {
                t.acc(ia, t.grads_[io] / t.nodes_[ia].val);
              });
}

Var Tape::sigmoid(Var a) {
  int ia = a.idx, io = (int)nodes_.size();
  Arr s = 1.0 / (1.0 + (-nodes_[ia].val).exp());
  return push(std::move(s), nodes_[ia].shape, rg(a), [ia, io](Tape& t) {
    const Arr& s = t.nodes_[io].val;
    t.acc(ia, t.grads_[io] * s * (1.0 - s));
  });
}

Var Tape::relu(Var a) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val.cwiseMax(0.0), nodes_[ia].shape, rg(a),
              [ia, io](Tape& t) {
                Arr mask = (t.nodes_[ia].val > 0.0).cast<double>();
                t.acc(ia, t.grads_[io] * mask);
              });
}

Var Tape::clamp_ste(Var a, double lo, double hi) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val.cwiseMax(lo).cwiseMin(hi), nodes_[ia].shape,
              rg(a), [ia, io](Tape& t) { t.acc(ia, t.grads_[io]); });
}

// ------------------------------------------------------- reductions/structure

Var Tape::sum(Var a) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(Arr::Constant(1, nodes_[ia].val.sum()), {}, rg(a),
              [ia, io](Tape& t) {
                t.acc(ia, Arr::Constant(t.nodes_[ia].val.size(),
                                        t.grads_[io][0]));
              });
}

Var Tape::mean(Var a) {
  long n = nodes_[a.idx].val.size();
  return scale(sum(a), 1.0 / (double)n);
}

Var Tape::concat(const std::vector<Var>& parts, std::vector<int> shape) {
  long n = 0;
  bool any_rg = false;
  for (Var p : parts) {
    n += nodes_[p.idx].val.size();
    any_rg = any_rg || rg(p);
  }
  Arr v(n);
  std::vector<int> idxs;
  std::vector<long> offs;
  long off = 0;
  for (Var p : parts) {
    long len = nodes_[p.idx].val.size();
    v.segment(off, len) = nodes_[p.idx].val;
    idxs.push_back(p.idx);
    offs.push_back(off);
    off += len;
  }
  int io = (int)nodes_.size();
  return push(std::move(v), std::move(shape), any_rg,
              [idxs, offs, io](Tape& t) {
                const Arr& g = t.grads_[io];
                for (std::size_t i = 0; i < idxs.size(); ++i) {
                  long len = t.nodes_[idxs[i]].val.size();
                  t.acc(idxs[i], g.segment(offs[i], len));
                }
              });
}

Var Tape::slice(Var a, long offset, long len, std::vector<int> shape) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val.segment(offset, len), std::move(shape), rg(a),
              [ia, io, offset, len](Tape& t) {
                Arr g = Arr::Zero(t.nodes_[ia].val.size());
                g.segment(offset, len) = t.grads_[io];
                t.acc(ia, g);
              });
}

Var Tape::permute(Var a, std::vector<long> perm, std::vector<int> shape) {
  int ia = a.idx, io = (int)nodes_.size();
  Arr v(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    v[i] = nodes_[ia].val[perm[i]];
  return push(std::move(v), std::move(shape), rg(a),
              [ia, io, perm = std::move(perm)](Tape& t) {
                Arr g = Arr::Zero(t.nodes_[ia].val.size());
                const Arr& go = t.grads_[io];
                for (std::size_t i = 0; i < perm.size(); ++i)
                  g[perm[i]] += go[i];
                t.acc(ia, g);
              });
}

Var Tape::reshape(Var a, std::vector<int> shape) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(nodes_[ia].val, std::move(shape), rg(a),
              [ia, io](Tape& t) { t.acc(ia, t.grads_[io]); });
}

Var Tape::gather1(Var a, int index) {
  int ia = a.idx, io = (int)nodes_.size();
  return push(Arr::Constant(1, nodes_[ia].val[index]), {}, rg(a),
              [ia, io, index](Tape& t) {
                Arr g = Arr::Zero(t.nodes_[ia].val.size());
                g[index] = t.grads_[io][0];
                t.acc(ia, g);
              });
}

Var Tape::max_excluding(Var a, int excluded) {
  const Arr& v = nodes_[a.idx].val;
  int best = -1;
  for (int i = 0; i < v.size(); ++i) {
    if (i == excluded) continue;
    if (best < 0 || v[i] > v[best]) best = i;
  }
  if (best < 0) throw InvalidScores("max_excluding: no candidates");
  return gather1(a, best);
}

Var Tape::log_softmax(Var a) {
  const Arr& x = nodes_[a.idx].val;
  double m = x.maxCoeff();
  double lse = m + std::log((x - m).exp().sum());
  int ia = a.idx, io = (int)nodes_.size();
  return push(x - lse, nodes_[ia].shape, rg(a), [ia, io](Tape& t) {
    const Arr& g = t.grads_[io];
    Arr p = t.nodes_[io].val.exp();
    t.acc(ia, g - p * g.sum());
  });
}

// ---------------------------------------------------------------- channel ops

Var Tape::chan_mul(Var v, Var s, int C) {
  int iv = v.idx, is = s.idx, io = (int)nodes_.size();
  long hw = nodes_[iv].val.size() / C;
  Arr out(nodes_[iv].val.size());
  for (int c = 0; c < C; ++c)
    out.segment(c * hw, hw) = nodes_[iv].val.segment(c * hw, hw) *
                              nodes_[is].val[c];
  return push(std::move(out), nodes_[iv].shape, rg(v) || rg(s),
              [iv, is, io, C, hw](Tape& t) {
                const Arr& g = t.grads_[io];
                Arr gv(t.nodes_[iv].val.size());
                Arr gs = Arr::Zero(C);
                for (int c = 0; c < C; ++c) {
                  auto gseg = g.segment(c * hw, hw);
                  gv.segment(c * hw, hw) = gseg * t.nodes_[is].val[c];
                  gs[c] = (gseg * t.nodes_[iv].val.segment(c * hw, hw)).sum();
                }
                t.acc(iv, gv);
                t.acc(is, gs);
              });
}

Var Tape::chan_add(Var v, Var b, int C) {
  int iv = v.idx, ib = b.idx, io = (int)nodes_.size();
  long hw = nodes_[iv].val.size() / C;
  Arr out(nodes_[iv].val.size());
  for (int c = 0; c < C; ++c)
    out.segment(c * hw, hw) =
        nodes_[iv].val.segment(c * hw, hw) + nodes_[ib].val[c];
  return push(std::move(out), nodes_[iv].shape, rg(v) || rg(b),
              [iv, ib, io, C, hw](Tape& t) {
                const Arr& g = t.grads_[io];
                Arr gb = Arr::Zero(C);
                for (int c = 0; c < C; ++c)
                  gb[c] = g.segment(c * hw, hw).sum();
                t.acc(iv, g);
                t.acc(ib, gb);
              });
}

// ---------------------------------------------------------------- 1x1 mixing

Var Tape::mix_fwd(Var w, Var v, int C) {
  int iw = w.idx, iv = v.idx, io = (int)nodes_.size();
  long hw = nodes_[iv].val.size() / C;
  CMapRow W(nodes_[iw].val.data(), C, C);
  CMapRow V(nodes_[iv].val.data(), C, hw);
  Arr out(nodes_[iv].val.size());
  MapRow O(out.data(), C, hw);
  O = W * V;
  return push(std::move(out), nodes_[iv].shape, rg(w) || rg(v),
              [iw, iv, io, C, hw](Tape& t) {
                CMapRow W(t.nodes_[iw].val.data(), C, C);
                CMapRow V(t.nodes_[iv].val.data(), C, hw);
                CMapRow G(t.grads_[io].data(), C, hw);
                Arr gv(t.nodes_[iv].val.size());
                MapRow GV(gv.data(), C, hw);
                GV = W.transpose() * G;
                Arr gw(C * C);
                MapRow GW(gw.data(), C, C);
                GW = G * V.transpose();
                t.acc(iv, gv);
                t.acc(iw, gw);
              });
}

Var Tape::mix_inv(Var w, Var v, int C) {
  int iw = w.idx, iv = v.idx, io = (int)nodes_.size();
  long hw = nodes_[iv].val.size() / C;
  CMapRow W(nodes_[iw].val.data(), C, C);
  Mat A = W.partialPivLu().inverse();
  CMapRow V(nodes_[iv].val.data(), C, hw);
  Arr out(nodes_[iv].val.size());
  MapRow O(out.data(), C, hw);
  O = A * V;
  return push(std::move(out), nodes_[iv].shape, rg(w) || rg(v),
              [iw, iv, io, C, hw, A](Tape& t) {
                CMapRow G(t.grads_[io].data(), C, hw);
                CMapRow Y(t.nodes_[io].val.data(), C, hw);
                Arr gv(t.nodes_[iv].val.size());
                MapRow GV(gv.data(), C, hw);
                GV = A.transpose() * G;
                Arr gw(C * C);
                MapRow GW(gw.data(), C, C);
                GW = -(A.transpose() * G) * Y.transpose();
                t.acc(iv, gv);
                t.acc(iw, gw);
              });
}

Var Tape::mix_logdet(Var w, int C) {
  int iw = w.idx, io = (int)nodes_.size();
  CMapRow W(nodes_[iw].val.data(), C, C);
  Eigen::PartialPivLU<Mat> lu(W);
  double ld = 0.0;
  {
    const Mat& U = lu.matrixLU();
    for (int i = 0; i < C; ++i) ld += std::log(std::abs(U(i, i)));
  }
  if (!std::isfinite(ld))
    throw NumericalError("mix_logdet: singular mixing matrix");
  Mat At = lu.inverse().transpose();
  return push(Arr::Constant(1, ld), {}, rg(w), [iw, io, C, At](Tape& t) {
    double g = t.grads_[io][0];
    Arr gw(C * C);
    MapRow GW(gw.data(), C, C);
    GW = g * At;
    t.acc(iw, gw);
  });
}

// ------------------------------------------------------------------- dense

Var Tape::linear(Var w, Var b, Var x) {
  int iw = w.idx, ib = b.idx, ix = x.idx, io = (int)nodes_.size();
  long in = nodes_[ix].val.size();
  long out_n = nodes_[ib].val.size();
  CMapRow W(nodes_[iw].val.data(), out_n, in);
  Arr out = (W * nodes_[ix].val.matrix()).array() + nodes_[ib].val;
  return push(std::move(out), {(int)out_n}, rg(w) || rg(b) || rg(x),
              [iw, ib, ix, io, in, out_n](Tape& t) {
                const Arr& g = t.grads_[io];
                CMapRow W(t.nodes_[iw].val.data(), out_n, in);
                Arr gx = (W.transpose() * g.matrix()).array();
                Arr gw(out_n * in);
                MapRow GW(gw.data(), out_n, in);
                GW = g.matrix() * t.nodes_[ix].val.matrix().transpose();
                t.acc(ix, gx);
                t.acc(iw, gw);
                t.acc(ib, g);
              });
}

// --------------------------------------------------------------------- conv

namespace {

void im2col(const Arr& x, int Cin, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, Mat& K) {
  K.setZero(Cin * kh * kw, (long)Ho * Wo);
  for (int ci = 0; ci < Cin; ++ci) {
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        int r = (ci * kh + u) * kw + v;
        for (int ho = 0; ho < Ho; ++ho) {
          int hi = ho * stride + u - pad;
          if (hi < 0 || hi >= H) continue;
          for (int wo = 0; wo < Wo; ++wo) {
            int wi = wo * stride + v - pad;
            if (wi < 0 || wi >= W) continue;
            K(r, (long)ho * Wo + wo) = x[((long)ci * H + hi) * W + wi];
          }
        }
      }
    }
  }
}

void col2im(const Mat& GK, int Cin, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, Arr& gx) {
  gx = Arr::Zero((long)Cin * H * W);
  for (int ci = 0; ci < Cin; ++ci) {
    for (int u = 0; u < kh; ++u) {
      for (int v = 0; v < kw; ++v) {
        int r = (ci * kh + u) * kw + v;
        for (int ho = 0; ho < Ho; ++ho) {
          int hi = ho * stride + u - pad;
          if (hi < 0 || hi >= H) continue;
          for (int wo = 0; wo < Wo; ++wo) {
            int wi = wo * stride + v - pad;
            if (wi < 0 || wi >= W) continue;
            gx[((long)ci * H + hi) * W + wi] += GK(r, (long)ho * Wo + wo);
          }
        }
      }
    }
  }
}

}  // namespace

Var Tape::conv2d(Var x, Var w, Var b, int kh, int kw, int stride, int pad) {
  int ix = x.idx, iw = w.idx, ib = b.idx, io = (int)nodes_.size();
  const auto& xs = nodes_[ix].shape;
  if (xs.size() != 3) throw ShapeError("conv2d: input must be [C,H,W]");
  int Cin = xs[0], H = xs[1], W = xs[2];
  int Ho = (H + 2 * pad - kh) / stride + 1;
  int Wo = (W + 2 * pad - kw) / stride + 1;
  int Cout = (int)nodes_[ib].val.size();
  Mat K;
  im2col(nodes_[ix].val, Cin, H, W, kh, kw, stride, pad, Ho, Wo, K);
  CMapRow Wm(nodes_[iw].val.data(), Cout, (long)Cin * kh * kw);
  Arr out((long)Cout * Ho * Wo);
  MapRow O(out.data(), Cout, (long)Ho * Wo);
  O = Wm * K;
  O.colwise() += nodes_[ib].val.matrix();
  bool need = rg(x) || rg(w) || rg(b);
  std::shared_ptr<Mat> Kp;
  if (need && grad_enabled_) Kp = std::make_shared<Mat>(std::move(K));
  return push(std::move(out), {Cout, Ho, Wo}, need,
              [ix, iw, ib, io, Cin, H, W, kh, kw, stride, pad, Ho, Wo, Cout,
               Kp](Tape& t) {
                CMapRow G(t.grads_[io].data(), Cout, (long)Ho * Wo);
                CMapRow Wm(t.nodes_[iw].val.data(), Cout, (long)Cin * kh * kw);
                if (t.nodes_[iw].rg) {
                  Arr gw((long)Cout * Cin * kh * kw);
                  MapRow GW(gw.data(), Cout, (long)Cin * kh * kw);
                  GW = G * Kp->transpose();
                  t.acc(iw, gw);
                }
                if (t.nodes_[ib].rg) {
                  Arr gb = G.rowwise().sum().array();
                  t.acc(ib, gb);
                }
                if (t.nodes_[ix].rg) {
                  Mat GK = Wm.transpose() * G;
                  Arr gx;
                  col2im(GK, Cin, H, W, kh, kw, stride, pad, Ho, Wo, gx);
                  t.acc(ix, gx);
                }
              });
}

}  // namespace mcg::ad
