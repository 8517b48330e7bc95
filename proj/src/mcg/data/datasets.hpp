#ifndef MCG_DATA_DATASETS_HPP
#define MCG_DATA_DATASETS_HPP

#include <string>

#include "mcg/nn/classifier.hpp"
#include "mcg/rng.hpp"

namespace mcg::data {

struct ShapesConfig {
  int num_classes = 5;
  int height = 32;
  int width = 32;
  double background = 0.4;
  double noise = 0.04;
  double gradient = 0.0;       // amplitude of a random linear shading ramp
  bool random_colors = false;  // color becomes a nuisance variable
};

// Hermetic procedural dataset: colored geometric shapes on a noisy
// mid-gray background. Class k gets a fixed outline and, unless colors
// are randomized, a fixed color; position, size and tone are jittered.
// Classes are covered evenly.
nn::Dataset make_shapes(int n, const ShapesConfig& cfg, std::uint64_t seed);

// CIFAR-10 binary batches (data_batch_*.bin / test_batch.bin).
nn::Dataset load_cifar10(const std::string& dir, bool train);

// MNIST idx files.
nn::Dataset load_mnist(const std::string& images_path,
                       const std::string& labels_path);

}  // namespace mcg::data

#endif  // MCG_DATA_DATASETS_HPP
