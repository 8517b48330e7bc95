#ifndef MCG_HARNESS_CHECKPOINT_HPP
#define MCG_HARNESS_CHECKPOINT_HPP

#include <string>

#include "mcg/flow/glow.hpp"
#include "mcg/nn/classifier.hpp"

namespace mcg::harness {

// Classifier checkpoints: metadata (arch, class count, input dims,
// trainable flags) plus one weight/bias array pair per parameter group.
void save_classifier(const std::string& path, const nn::Classifier& model);
nn::Classifier load_classifier(const std::string& path);

// Generator checkpoints: the flow configuration plus every parameter
// array under its canonical key.
void save_flow(const std::string& path, const flow::FlowParams& params);
flow::FlowParams load_flow(const std::string& path);

// Content hash of a file (FNV-1a 64, hex). Reports reference checkpoints
// by path + hash so a stale artifact is detectable.
std::string file_hash(const std::string& path);

}  // namespace mcg::harness

#endif
