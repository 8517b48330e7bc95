#ifndef MCG_ATTACK_ATTACKER_HPP
#define MCG_ATTACK_ATTACKER_HPP

#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "mcg/oracle/oracle.hpp"
#include "mcg/rng.hpp"

namespace mcg::attack {

// Generator hand-off. When scores0 is present it must be the oracle's
// (already charged) response to clamp(x + delta0); the attacker then
// starts from that evaluation without re-querying.
struct InitState {
  const Tensor* delta0 = nullptr;
  const Arr* scores0 = nullptr;
};

class Attacker {
 public:
  virtual ~Attacker() = default;
  virtual const char* id() const = 0;
  // Never exceeds the oracle's ledger; deterministic given rng.
  virtual AttackResult run(oracle::TargetOracle& oracle, const Tensor& x,
                           const AttackGoal& goal, double epsilon,
                           const InitState& init, Rng& rng) = 0;
};

// Antithetic Gaussian (NES) gradient estimate at `mean`:
//   g = sum_i [L(mean + sigma u_i) - L(mean - sigma u_i)] u_i / (2 sigma q)
// with q = population base draws. loss_at receives the flat probe point
// and may clip or project before scoring; exceptions pass through.
Arr nes_gradient_estimate(const std::function<double(const Arr&)>& loss_at,
                          const Arr& mean, double sigma, int population,
                          Rng& rng);

// Registry ids: "square", "signhunter", "simba_dct", "nes".
std::unique_ptr<Attacker> make_attacker(const std::string& id,
                                        const nlohmann::json& params = {});
std::vector<std::string> attacker_ids();

}  // namespace mcg::attack

#endif
