#include "mcg/attack/attacker.hpp"

#include <cmath>

#include "mcg/flow/dct.hpp"
#include "mcg/loss/losses.hpp"

namespace mcg::attack {

namespace {

// Shared query bookkeeping: every attacker evaluates candidates through
// eval(), which charges exactly one ledger unit per score observation and
// tracks the margin loss of the current best perturbation.
class Session {
 public:
  Session(oracle::TargetOracle& o, const Tensor& x, const AttackGoal& goal,
          double eps)
      : o_(o), x_(x), goal_(goal), eps_(eps),
        start_used_(o.ledger().used()) {}

  bool out_of_budget() const { return o_.ledger().exhausted(); }
  std::uint64_t used() const { return o_.ledger().used() - start_used_; }
  double epsilon() const { return eps_; }

  struct Eval {
    double loss = 0.0;
    bool success = false;
  };

  // Charged oracle evaluation of a candidate (already projected) delta.
  Eval eval(const Tensor& delta) {
    Arr scores = o_.query(clamp_adversarial(x_, delta), goal_);
    return {loss::adv_margin_loss(loss::log_scores(scores), goal_),
            is_success(scores, goal_)};
  }

  Eval from_scores(const Arr& scores) const {
    return {loss::adv_margin_loss(loss::log_scores(scores), goal_),
            is_success(scores, goal_)};
  }

  Tensor project(Tensor delta) const {
    delta.data = delta.data.cwiseMax(-eps_).cwiseMin(eps_);
    return delta;
  }

  AttackResult finish(bool success, Tensor delta, bool first_query) const {
    AttackResult r;
    r.success = success;
    r.queries_used = used();
    r.final_delta = Perturbation(std::move(delta), eps_);
    r.first_query_success = success && first_query && r.queries_used <= 1;
    return r;
  }

 private:
  oracle::TargetOracle& o_;
  const Tensor& x_;
  AttackGoal goal_;
  double eps_;
  std::uint64_t start_used_;
};

// Establishes the starting point shared by all attackers: either adopt
// the hand-off evaluation, or charge one query for the initial delta.
// Returns true if the run is already decided (success or empty budget).
bool establish(Session& s, const InitState& init, Tensor& delta,
               Session::Eval& cur, AttackResult& early) {
  if (init.delta0 && init.scores0) {
    delta = s.project(*init.delta0);
    cur = s.from_scores(*init.scores0);
    if (cur.success) {
      early = s.finish(true, delta, true);
      return true;
    }
    return false;
  }
  if (s.out_of_budget()) {
    early = s.finish(false, delta, false);
    return true;
  }
  cur = s.eval(delta);
  if (cur.success) {
    early = s.finish(true, delta, true);
    return true;
  }
  return false;
}

// ---- Square ----

struct SquareAttacker final : Attacker {
  double p0 = 0.1;

  const char* id() const override { return "square"; }

  static int halvings(double frac) {
    static const double cuts[] = {0.001, 0.005, 0.02, 0.05,
                                  0.1,   0.2,   0.4,  0.6, 0.8};
    int n = 0;
    for (double c : cuts)
      if (frac >= c) ++n;
    return n;
  }

  AttackResult run(oracle::TargetOracle& o, const Tensor& x,
                   const AttackGoal& goal, double eps, const InitState& init,
                   Rng& rng) override {
    Session s(o, x, goal, eps);
    int C = x.channels(), H = x.height(), W = x.width();
    Tensor delta = Tensor::zeros(x.shape);
    if (init.delta0) {
      delta = s.project(*init.delta0);
    } else {
      // vertical-stripe init: one sign per (channel, column)
      for (int c = 0; c < C; ++c)
        for (int w = 0; w < W; ++w) {
          double v = rng.rademacher() * eps;
          for (int h = 0; h < H; ++h) delta.at(c, h, w) = v;
        }
    }
    Session::Eval cur;
    AttackResult early;
    if (establish(s, init, delta, cur, early)) return early;

    const double budget = (double)o.ledger().budget();
    while (!s.out_of_budget()) {
      double frac = budget > 0 ? (double)o.ledger().used() / budget : 1.0;
      double p = p0 / std::pow(2.0, halvings(frac));
      int side = std::max(
          1, (int)std::lround(std::sqrt(p * (double)H * (double)W)));
      side = std::min(side, std::min(H, W));
      int r = (int)rng.uniform_int(0, H - side);
      int cpos = (int)rng.uniform_int(0, W - side);
      Tensor cand = delta;
      for (int c = 0; c < C; ++c) {
        double v = rng.rademacher() * eps;
        for (int dy = 0; dy < side; ++dy)
          for (int dx = 0; dx < side; ++dx)
            cand.at(c, r + dy, cpos + dx) = v;
      }
      auto e = s.eval(cand);
      if (e.success) return s.finish(true, cand, false);
      if (e.loss < cur.loss) {
        delta = std::move(cand);
        cur = e;
      }
    }
    return s.finish(false, delta, false);
  }
};

// ---- SignHunter ----

struct SignHunterAttacker final : Attacker {
  const char* id() const override { return "signhunter"; }

  AttackResult run(oracle::TargetOracle& o, const Tensor& x,
                   const AttackGoal& goal, double eps, const InitState& init,
                   Rng&) override {
    Session s(o, x, goal, eps);
    long d = x.numel();
    Arr sign = Arr::Ones(d);
    auto as_delta = [&](const Arr& sg) {
      return Tensor(x.shape, eps * sg);
    };
    Tensor delta = init.delta0 ? s.project(*init.delta0) : as_delta(sign);
    Session::Eval cur;
    AttackResult early;
    if (establish(s, init, delta, cur, early)) return early;
    if (init.delta0) {
      // hand-off case: the provided start was not adversarial, and its
      // loss belongs to a point off the sign lattice, so restart the
      // search from the canonical all-positive corner with its own eval
      delta = as_delta(sign);
      if (s.out_of_budget()) return s.finish(false, delta, false);
      cur = s.eval(delta);
      if (cur.success) return s.finish(true, delta, false);
    }

    int level = 0;
    long node = 0;
    while (!s.out_of_budget()) {
      long chunks = 1L << level;
      long len = (d + chunks - 1) / chunks;
      long lo = node * len;
      if (lo >= d) {  // next level; wrap after the deepest one
        ++level;
        node = 0;
        if ((1L << level) >= 2 * d) level = 0;
        continue;
      }
      long hi = std::min(d, lo + len);
      sign.segment(lo, hi - lo) *= -1.0;
      Tensor cand = as_delta(sign);
      auto e = s.eval(cand);
      if (e.success) return s.finish(true, cand, false);
      if (e.loss < cur.loss)
        cur = e;
      else
        sign.segment(lo, hi - lo) *= -1.0;  // revert the flip
      ++node;
    }
    return s.finish(false, as_delta(sign), false);
  }
};

// ---- SimBA over the low-frequency DCT basis ----

struct SimbaDctAttacker final : Attacker {
  double step = 0.0;          // 0 = use epsilon
  double freq_fraction = 0.5; // low-frequency window as a fraction of H, W

  const char* id() const override { return "simba_dct"; }

  AttackResult run(oracle::TargetOracle& o, const Tensor& x,
                   const AttackGoal& goal, double eps, const InitState& init,
                   Rng& rng) override {
    Session s(o, x, goal, eps);
    Tensor delta = init.delta0 ? s.project(*init.delta0)
                               : Tensor::zeros(x.shape);
    Session::Eval cur;
    AttackResult early;
    if (establish(s, init, delta, cur, early)) return early;

    int C = x.channels(), H = x.height(), W = x.width();
    int kh = std::max(1, (int)(H * freq_fraction));
    int kw = std::max(1, (int)(W * freq_fraction));
    std::vector<std::array<int, 3>> dirs;
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) dirs.push_back({c, i, j});

    double mag = step > 0 ? step : eps;
    std::size_t cursor = dirs.size();
    while (!s.out_of_budget()) {
      if (cursor == dirs.size()) {
        rng.shuffle(dirs);
        cursor = 0;
      }
      auto [c, i, j] = dirs[cursor++];
      Tensor coeff = Tensor::zeros({1, H, W});
      coeff.at(0, i, j) = 1.0;
      Tensor basis = flow::dct_up(coeff, H, W);  // unit-norm spatial image
      for (double dir : {1.0, -1.0}) {
        Tensor cand = delta;
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w)
            cand.at(c, h, w) += dir * mag * basis.at(0, h, w);
        cand = s.project(std::move(cand));
        auto e = s.eval(cand);
        if (e.success) return s.finish(true, cand, false);
        if (e.loss < cur.loss) {
          delta = std::move(cand);
          cur = e;
          break;
        }
        if (s.out_of_budget()) break;
      }
    }
    return s.finish(false, delta, false);
  }
};

// ---- NES ----

struct NesAttacker final : Attacker {
  double sigma = 0.01;
  int population = 20;  // antithetic pairs: population/2 base draws
  double eta = 0.0;     // 0 = epsilon / 10

  const char* id() const override { return "nes"; }

  AttackResult run(oracle::TargetOracle& o, const Tensor& x,
                   const AttackGoal& goal, double eps, const InitState& init,
                   Rng& rng) override {
    if (sigma <= 0) throw ConfigError("nes: sigma <= 0");
    if (population < 2 || population % 2 != 0)
      throw ConfigError("nes: population must be even and >= 2");
    Session s(o, x, goal, eps);
    Tensor mean = init.delta0 ? s.project(*init.delta0)
                              : Tensor::zeros(x.shape);
    Session::Eval cur;
    AttackResult early;
    if (establish(s, init, mean, cur, early)) return early;

    const double lr = eta > 0 ? eta : eps / 10.0;
    struct Truncated {};
    struct Succeeded {
      Tensor probe;
    };
    // each iteration charges exactly 2 * population queries
    while (!s.out_of_budget()) {
      try {
        Arr grad = nes_gradient_estimate(
            [&](const Arr& point) {
              if (s.out_of_budget()) throw Truncated{};
              Tensor probe = s.project(Tensor(x.shape, point));
              auto e = s.eval(probe);
              if (e.success) throw Succeeded{probe};
              return e.loss;
            },
            mean.data, sigma, population, rng);
        mean = s.project(Tensor(x.shape, mean.data - lr * grad.sign()));
      } catch (const Truncated&) {
        break;
      } catch (const Succeeded& hit) {
        return s.finish(true, hit.probe, false);
      }
    }
    return s.finish(false, mean, false);
  }
};

}  // namespace

Arr nes_gradient_estimate(const std::function<double(const Arr&)>& loss_at,
                          const Arr& mean, double sigma, int population,
                          Rng& rng) {
  if (sigma <= 0) throw ConfigError("nes estimate: sigma <= 0");
  if (population < 1) throw ConfigError("nes estimate: population < 1");
  Arr grad = Arr::Zero(mean.size());
  for (int i = 0; i < population; ++i) {
    Arr u = rng.gaussian_vec(mean.size());
    for (double dir : {1.0, -1.0})
      grad += dir * loss_at(mean + dir * sigma * u) * u;
  }
  return grad / (2.0 * sigma * (double)population);
}

std::unique_ptr<Attacker> make_attacker(const std::string& id,
                                        const nlohmann::json& params_in) {
  const nlohmann::json params =
      params_in.is_null() ? nlohmann::json::object() : params_in;
  if (!params.is_object()) throw ConfigError("attacker params must be a map");
  if (id == "square") {
    auto a = std::make_unique<SquareAttacker>();
    a->p0 = params.value("p0", a->p0);
    if (a->p0 <= 0 || a->p0 > 1) throw ConfigError("square: p0 outside (0,1]");
    return a;
  }
  if (id == "signhunter") return std::make_unique<SignHunterAttacker>();
  if (id == "simba_dct") {
    auto a = std::make_unique<SimbaDctAttacker>();
    a->step = params.value("step", a->step);
    a->freq_fraction = params.value("freq_fraction", a->freq_fraction);
    if (a->freq_fraction <= 0 || a->freq_fraction > 1)
      throw ConfigError("simba_dct: freq_fraction outside (0,1]");
    return a;
  }
  if (id == "nes") {
    auto a = std::make_unique<NesAttacker>();
    a->sigma = params.value("sigma", a->sigma);
    a->population = params.value("population", a->population);
    a->eta = params.value("eta", a->eta);
    if (a->sigma <= 0) throw ConfigError("nes: sigma must be positive");
    if (a->population < 2 || a->population % 2 != 0)
      throw ConfigError("nes: population must be even and >= 2");
    return a;
  }
  throw ConfigError("unknown attacker id: " + id);
}

std::vector<std::string> attacker_ids() {
  return {"square", "signhunter", "simba_dct", "nes"};
}

}  // namespace mcg::attack
