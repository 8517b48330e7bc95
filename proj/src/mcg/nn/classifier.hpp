#ifndef MCG_NN_CLASSIFIER_HPP
#define MCG_NN_CLASSIFIER_HPP

#include <string>
#include <vector>

#include "mcg/ad/tape.hpp"
#include "mcg/core.hpp"
#include "mcg/rng.hpp"

namespace mcg::nn {

struct Dataset {
  std::vector<Tensor> images;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return images.size(); }
};

// One freezable unit: a conv or fully-connected layer (weight + bias).
struct ParamGroup {
  std::string name;
  Tensor weight;
  Tensor bias;
  bool trainable = true;
};

// Small differentiable classifier. Architectures:
//   linear  - flatten + fc
//   cnn_a   - 4 convs + fc              (5 groups)
//   cnn_b   - 2 convs + 2 fc            (4 groups)
class Classifier {
 public:
  Classifier() = default;
  static Classifier make(const std::string& arch, int num_classes, int C,
                         int H, int W, Rng& rng);

  const std::string& arch() const { return arch_; }
  int num_classes() const { return num_classes_; }
  int in_channels() const { return C_; }
  int in_height() const { return H_; }
  int in_width() const { return W_; }

  std::vector<ParamGroup>& groups() { return groups_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }

  // Put parameters on a tape: trainable groups become inputs, frozen ones
  // constants (so their gradient is exactly zero).
  struct TapeParams {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
  };
  TapeParams params_on_tape(ad::Tape& t) const;

  ad::Var logits(ad::Tape& t, ad::Var x, const TapeParams& p) const;
  ad::Var log_probs(ad::Tape& t, ad::Var x, const TapeParams& p) const {
    return t.log_softmax(logits(t, x, p));
  }

  // Plain inference: probability vector summing to 1.
  Arr scores(const Tensor& x) const;

  double test_error(const Dataset& d) const;

 private:
  struct LayerSpec {
    enum Kind { conv, fc, relu_act } kind;
    int cout = 0, k = 0, stride = 1, pad = 0;
  };

  void check_input(const Tensor& x) const;

  std::string arch_;
  int num_classes_ = 0, C_ = 0, H_ = 0, W_ = 0;
  std::vector<LayerSpec> layers_;
  std::vector<ParamGroup> groups_;
};

// Exactly the last n_groups parameter groups trainable.
Classifier freeze_except_last(const Classifier& model, int n_groups);

struct TrainConfig {
  int epochs = 10;
  double lr = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

// Minibatch Adam on cross entropy. Deterministic given the seed.
Classifier train_classifier(const Dataset& train, const std::string& arch,
                            const TrainConfig& cfg, int C, int H, int W);

}  // namespace mcg::nn

#endif  // MCG_NN_CLASSIFIER_HPP
