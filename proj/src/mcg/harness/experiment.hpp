#ifndef MCG_HARNESS_EXPERIMENT_HPP
#define MCG_HARNESS_EXPERIMENT_HPP

#include <string>

#include "mcg/harness/config.hpp"
#include "mcg/harness/metrics.hpp"
#include "mcg/nn/classifier.hpp"

namespace mcg::harness {

// Dataset described by the data.* keys (procedural shapes by default,
// or CIFAR-10 / MNIST files on disk).
nn::Dataset load_dataset(const Config& cfg);

// One verb each. All artifact paths in the config are resolved relative
// to the output directory unless absolute.
void run_zoo_train(const Config& cfg);    // train + save one classifier
void run_pgd_corpus(const Config& cfg);   // white-box perturbation corpus
void run_pretrain(const Config& cfg);     // generator max-likelihood fit
void run_meta_train(const Config& cfg);   // batch-REPTILE over tasks
MetricsReport run_attack(const Config& cfg);
MetricsReport run_report(const Config& cfg);  // recompute from JSONL
void run_curve(const Config& cfg);            // ASR-vs-budget table

// Dispatch by CLI verb name ("zoo-train", "pgd-corpus", "pretrain",
// "meta-train", "attack", "report", "curve"); unknown -> ConfigError.
void run_verb(const std::string& verb, const Config& cfg);

}  // namespace mcg::harness

#endif
