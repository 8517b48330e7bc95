#ifndef MCG_FLOW_GLOW_HPP
#define MCG_FLOW_GLOW_HPP

#include <functional>
#include <string>
#include <vector>

#include "mcg/ad/tape.hpp"
#include "mcg/core.hpp"
#include "mcg/rng.hpp"

namespace mcg::flow {

struct FlowConfig {
  // conditioning image shape
  int image_channels = 3;
  int image_height = 32;
  int image_width = 32;
  // flow working space = image shape / dct_factor (1 = raw pixels)
  int dct_factor = 1;
  int blocks = 2;
  int steps = 4;        // flow steps per block
  int hidden = 16;      // coupling net hidden channels
  int cond_channels = 4;
  double epsilon = 0.1;  // l-inf bound applied at emission

  int flow_channels() const { return image_channels; }
  int flow_height() const { return image_height / dct_factor; }
  int flow_width() const { return image_width / dct_factor; }
  long latent_dim() const {
    return (long)flow_channels() * flow_height() * flow_width();
  }
  void validate() const;
};

struct CouplingParams {
  Tensor w1, b1, w2, b2;  // 3x3 convs; w2 zero-initialized
};

struct StepParams {
  Tensor act_log_s, act_b;  // per-channel actnorm (scale stored as log)
  Tensor mix_w;             // [C,C] invertible channel mixing
  CouplingParams coup;
};

struct BlockParams {
  std::vector<StepParams> steps;
};

struct CondParams {
  // stride-2 conv chain over the (low-frequency) conditioning image;
  // stage b's output feeds every coupling layer of block b
  std::vector<Tensor> w, b;
};

// Which parameters a per-task adaptation may touch.
enum class AdaptScope { all, gaussian_only };

struct FlowParams {
  FlowConfig cfg;
  Tensor mu, log_sigma;  // conditional base distribution over the latent
  std::vector<BlockParams> blocks;
  CondParams cond;

  // Visit every parameter array with its checkpoint key, in a fixed order.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(
      const std::function<void(const std::string&, const Tensor&)>& fn) const;
  // Visitation restricted to an adaptation scope.
  void for_each_in_scope(
      AdaptScope scope,
      const std::function<void(const std::string&, Tensor&)>& fn);

  double checksum() const;
};

FlowParams make_flow(const FlowConfig& cfg, Rng& rng,
                     bool identity_init = false);

// Tape-side handles. Parameters outside `scope` are tape constants.
struct FlowTapeParams {
  ad::Var mu, log_sigma;
  struct Step {
    ad::Var act_log_s, act_b, mix_w;
    ad::Var w1, b1, w2, b2;
  };
  std::vector<std::vector<Step>> blocks;
  std::vector<ad::Var> cond_w, cond_b;
};

FlowTapeParams params_on_tape(ad::Tape& t, const FlowParams& fp,
                              AdaptScope scope = AdaptScope::all);

struct FlowEval {
  ad::Var out;     // z (encode) or flow-space delta (decode)
  ad::Var logdet;  // log|det| of the applied direction
};

// Conditioning features per block, computed once per tape from the
// flow-space image (dct_down of the benign image when dct_factor > 1).
std::vector<ad::Var> condition_features(ad::Tape& t, const FlowConfig& cfg,
                                        const FlowTapeParams& tp,
                                        ad::Var x_flow);

// delta_flow -> z, accumulating the inverse-direction log-det (the one
// that enters the likelihood).
FlowEval encode_t(ad::Tape& t, const FlowConfig& cfg, const FlowTapeParams& tp,
                  ad::Var delta_flow, const std::vector<ad::Var>& cond_feats);
// z -> delta_flow; logdet here equals minus the encode log-det.
FlowEval decode_t(ad::Tape& t, const FlowConfig& cfg, const FlowTapeParams& tp,
                  ad::Var z, const std::vector<ad::Var>& cond_feats);

// Reparameterized draw: z = mu + temperature * sigma * noise, decoded and
// projected to the l-inf ball with a straight-through gradient. Returns the
// full-resolution perturbation.
ad::Var sample_delta_t(ad::Tape& t, const FlowConfig& cfg,
                       const FlowTapeParams& tp, const Arr& noise,
                       double temperature,
                       const std::vector<ad::Var>& cond_feats);

// log N(z; mu, diag sigma^2) + encode log-det, all on the tape.
ad::Var log_likelihood_t(ad::Tape& t, const FlowConfig& cfg,
                         const FlowTapeParams& tp, ad::Var delta_flow,
                         const std::vector<ad::Var>& cond_feats);

// Flow-space image used for conditioning (identity when dct_factor == 1).
Tensor to_flow_space(const FlowConfig& cfg, const Tensor& x);

// ---- plain (no-grad) API on full-resolution perturbations ----

// z and the forward log-det log|det d(delta)/dz|.
std::pair<Tensor, double> flow_forward(const Tensor& z_flat, const Tensor& x,
                                       const FlowParams& params);
std::pair<Tensor, double> flow_inverse(const Tensor& delta, const Tensor& x,
                                       const FlowParams& params);
double log_likelihood(const Tensor& delta, const Tensor& x,
                      const FlowParams& params);
Perturbation sample(const Tensor& x, const FlowParams& params,
                    double temperature, Rng& rng);
Perturbation mode(const Tensor& x, const FlowParams& params);

}  // namespace mcg::flow

#endif  // MCG_FLOW_GLOW_HPP
