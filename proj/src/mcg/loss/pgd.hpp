#ifndef MCG_LOSS_PGD_HPP
#define MCG_LOSS_PGD_HPP

#include <json.hpp>
#include <string>
#include <vector>

#include "mcg/core.hpp"
#include "mcg/nn/classifier.hpp"

namespace mcg::loss {

struct PgdConfig {
  double epsilon = 0.05;
  double step_size = 0.01;
  int iters = 50;
};

// White-box sign-gradient attack on the surrogate margin. The returned
// perturbation satisfies the l-inf bound exactly.
Perturbation pgd_attack(const nn::Classifier& model, const Tensor& x,
                        const AttackGoal& goal, const PgdConfig& cfg);

// (image id, perturbation) pairs against a fixed surrogate, used as the
// generator's maximum-likelihood pre-training corpus.
struct PgdCorpus {
  std::vector<int> ids;
  std::vector<Tensor> deltas;
  nlohmann::json meta = nlohmann::json::object();
};

PgdCorpus make_pgd_corpus(const nn::Dataset& data, const nn::Classifier& model,
                          const PgdConfig& cfg);

void save_corpus(const std::string& path, const PgdCorpus& corpus);
PgdCorpus load_corpus(const std::string& path);

}  // namespace mcg::loss

#endif
