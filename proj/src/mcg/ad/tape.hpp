#ifndef MCG_AD_TAPE_HPP
#define MCG_AD_TAPE_HPP

#include <functional>
#include <vector>

#include "mcg/tensor.hpp"

namespace mcg::ad {

using mcg::Arr;

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over flat double arrays. Shapes are carried alongside
// values for the convolution and channel ops; everything else treats the
// value as a flat vector. With grad disabled the tape is a plain evaluator.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  // Leaf that participates in differentiation.
  Var input(Arr v, std::vector<int> shape = {});
  // Leaf excluded from differentiation; its grad is identically zero.
  Var constant(Arr v, std::vector<int> shape = {});
  Var constant_scalar(double v);

  const Arr& val(Var v) const { return nodes_[v.idx].val; }
  const std::vector<int>& shape(Var v) const { return nodes_[v.idx].shape; }
  const Arr& grad(Var v) const;

  void backward(Var loss);

  // ---- elementwise ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var exp_(Var a);
  Var log_(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  // clamp with pass-through (straight-through) gradient
  Var clamp_ste(Var a, double lo, double hi);

  // ---- reductions / structure ----
  Var sum(Var a);
  Var mean(Var a);
  Var concat(const std::vector<Var>& parts, std::vector<int> shape = {});
  Var slice(Var a, long offset, long len, std::vector<int> shape = {});
  // out[i] = a[perm[i]]
  Var permute(Var a, std::vector<long> perm, std::vector<int> shape = {});
  Var reshape(Var a, std::vector<int> shape);
  Var gather1(Var a, int index);               // scalar a[index]
  Var max_excluding(Var a, int excluded);      // scalar, subgradient to argmax
  Var log_softmax(Var a);

  // ---- channel ops (value shaped [C, HW]) ----
  Var chan_mul(Var v, Var s, int C);
  Var chan_add(Var v, Var b, int C);

  // ---- invertible 1x1 channel mixing; w is a [C,C] row-major matrix ----
  Var mix_fwd(Var w, Var v, int C);
  Var mix_inv(Var w, Var v, int C);
  Var mix_logdet(Var w, int C);  // scalar log|det W|

  // ---- dense / conv ----
  // w: [out,in] row-major, b: [out], x: [in]
  Var linear(Var w, Var b, Var x);
  // x: [Cin,H,W]; w: [Cout, Cin*kh*kw] row-major; b: [Cout]
  Var conv2d(Var x, Var w, Var b, int kh, int kw, int stride, int pad);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Arr val;
    std::vector<int> shape;
    bool rg = false;  // requires grad
    std::function<void(Tape&)> back;
  };

  Var push(Arr val, std::vector<int> shape, bool rg,
           std::function<void(Tape&)> back);
  bool rg(Var v) const { return nodes_[v.idx].rg; }
  void acc(int idx, const Arr& g);

  std::vector<Node> nodes_;
  std::vector<Arr> grads_;
  bool grad_enabled_;
  bool in_backward_ = false;
};

}  // namespace mcg::ad

#endif  // MCG_AD_TAPE_HPP
