#ifndef MCG_META_TRAIN_HPP
#define MCG_META_TRAIN_HPP

#include <vector>

#include "mcg/flow/glow.hpp"
#include "mcg/loss/pgd.hpp"
#include "mcg/nn/classifier.hpp"

namespace mcg::meta {

// One benign image = one task.
struct TaskSpec {
  const Tensor* x = nullptr;
  AttackGoal goal;
};

struct PretrainConfig {
  double lr = 1e-3;
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

// Maximum-likelihood fit of the generator on white-box perturbations.
// Corpus ids index into `data`. Appends the per-epoch mean NLL to
// *nll_curve when provided.
flow::FlowParams pretrain_generator(const loss::PgdCorpus& corpus,
                                    const nn::Dataset& data,
                                    flow::FlowParams params,
                                    const PretrainConfig& cfg,
                                    std::vector<double>* nll_curve = nullptr);

struct InnerConfig {
  int k = 4;
  double alpha = 3e-4;
  int samples_per_step = 1;
  double temperature = 1.0;
  double confidence = 0.0;  // hinge offset: stop only below -confidence
  flow::AdaptScope scope = flow::AdaptScope::all;
  bool plain_sgd = false;  // plain gradient steps instead of Adam
};

// k Adam steps on the surrogate margin loss of sampled perturbations,
// with a task-local optimizer. Returns an adapted copy; the input meta
// parameters are never touched.
flow::FlowParams inner_adapt(const flow::FlowParams& meta, const Tensor& x,
                             const AttackGoal& goal,
                             const nn::Classifier& surrogate,
                             const InnerConfig& cfg, Rng& rng);

// Batch-REPTILE outer update: phi + beta * mean(adapted_i - phi).
flow::FlowParams reptile_outer(const flow::FlowParams& phi,
                               const std::vector<flow::FlowParams>& adapted,
                               double beta);

struct MetaTrainConfig {
  int n_tasks_per_batch = 16;
  int batches = 100;
  double beta = 6e-4;
  InnerConfig inner;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;  // 0 = never
  std::function<void(int, const flow::FlowParams&)> on_checkpoint;
};

struct MetaTrainLogRow {
  int batch = 0;
  double loss_before = 0.0;  // mean margin loss of mode(x) across the batch
  double loss_after = 0.0;   // same, under the adapted parameters
  double param_delta_norm = 0.0;
};

flow::FlowParams meta_train(const MetaTrainConfig& cfg,
                            flow::FlowParams pretrained,
                            const nn::Dataset& tasks,
                            const nn::Classifier& surrogate,
                            std::vector<MetaTrainLogRow>* log = nullptr);

// Margin loss of the generator's deterministic output against a
// white-box model; used for adaptation progress accounting.
double mode_margin_loss(const flow::FlowParams& params, const Tensor& x,
                        const AttackGoal& goal,
                        const nn::Classifier& surrogate);

}  // namespace mcg::meta

#endif
