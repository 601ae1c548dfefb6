#include "tppo/kl_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tppo/datagen.hpp"
#include "tppo/random.hpp"

namespace tppo {

void TabularInstance::validate() const {
  if (pi_ref.empty() || pi_ref.size() != advantages.size())
    throw InvalidInput("tabular instance needs matching, non-empty pi_ref and advantages");
  double total = 0.0;
  for (double p : pi_ref) {
    if (!(p > 0.0)) throw InvalidInput("pi_ref must be strictly positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("pi_ref must sum to 1");
  if (!(beta > 0.0)) throw InvalidInput("beta must be positive");
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    if (q[a] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[a] * std::log(p[a] / q[a]);
  }
  return kl;
}

double kl_regularized_objective(const TabularInstance& inst, std::span<const double> pi) {
  if (pi.size() != inst.actions()) throw InvalidInput("distribution size mismatch");
  double gain = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) gain += pi[a] * inst.advantages[a];
  return gain - inst.beta * kl_divergence(pi, inst.pi_ref);
}

namespace {

std::vector<double> log_weights(const TabularInstance& inst) {
  std::vector<double> lw(inst.actions());
  for (std::size_t a = 0; a < lw.size(); ++a)
    lw[a] = std::log(inst.pi_ref[a]) + inst.advantages[a] / inst.beta;
  return lw;
}

}  // namespace

double log_partition(const TabularInstance& inst) {
  const auto lw = log_weights(inst);
  const double m = *std::max_element(lw.begin(), lw.end());
  double z = 0.0;
  for (double v : lw) z += std::exp(v - m);
  return m + std::log(z);
}

std::vector<double> closed_form_optimal_policy(const TabularInstance& inst) {
  inst.validate();
  auto lw = log_weights(inst);
  const double log_z = log_partition(inst);
  for (auto& v : lw) v = std::exp(v - log_z);
  return lw;
}

std::vector<double> stationarity_residuals(const TabularInstance& inst,
                                           std::span<const double> pi) {
  std::vector<double> g(pi.size());
  for (std::size_t a = 0; a < pi.size(); ++a)
    g[a] = inst.advantages[a] - inst.beta * (1.0 + std::log(pi[a] / inst.pi_ref[a]));
  return g;
}

TabularInstance random_tabular_instance(Rng& rng) {
  TabularInstance inst;
  const int m = rng.uniform_int(2, 8);
  double total = 0.0;
  for (int a = 0; a < m; ++a) {
    const double w = 0.05 + rng.uniform();
    inst.pi_ref.push_back(w);
    total += w;
  }
  for (auto& p : inst.pi_ref) p /= total;
  for (int a = 0; a < m; ++a) inst.advantages.push_back(rng.uniform(-3.0, 3.0));
  inst.beta = rng.uniform(0.1, 5.0);
  return inst;
}

namespace {

std::vector<double> random_simplex_point(Rng& rng, std::size_t m) {
  std::vector<double> p(m);
  double total = 0.0;
  for (auto& v : p) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    v = -std::log(u);
    total += v;
  }
  for (auto& v : p) v /= total;
  return p;
}

// Perturbation families cycle: uniform-random simplex point, a point on the
// segment from the candidate to a simplex vertex, and a small multiplicative
// jitter of the candidate.
std::vector<double> perturbation(Rng& rng, std::span<const double> base, std::size_t k,
                                 std::size_t count) {
  const std::size_t m = base.size();
  switch (k % 3) {
    case 0:
      return random_simplex_point(rng, m);
    case 1: {
      const std::size_t vertex = (k / 3) % m;
      const std::size_t steps = std::max<std::size_t>(1, count / (3 * m));
      const double t = static_cast<double>((k / (3 * m)) % steps + 1) / static_cast<double>(steps);
      std::vector<double> p(base.begin(), base.end());
      for (std::size_t a = 0; a < m; ++a) p[a] = (1.0 - t) * p[a] + (a == vertex ? t : 0.0);
      return p;
    }
    default: {
      const double scale = std::pow(10.0, -rng.uniform(1.0, 6.0));
      std::vector<double> p(m);
      double total = 0.0;
      for (std::size_t a = 0; a < m; ++a) {
        p[a] = base[a] * std::exp(scale * rng.normal());
        total += p[a];
      }
      for (auto& v : p) v /= total;
      return p;
    }
  }
}

}  // namespace

Lemma1Trial check_tabular_optimum(const TabularInstance& inst, std::span<const double> candidate,
                                  Rng& rng, std::size_t perturbations) {
  Lemma1Trial t;
  t.instance = inst;
  t.policy.assign(candidate.begin(), candidate.end());
  const double best = kl_regularized_objective(inst, candidate);
  t.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < perturbations; ++k) {
    const auto p = perturbation(rng, candidate, k, perturbations);
    t.worst_margin = std::min(t.worst_margin, best - kl_regularized_objective(inst, p));
  }
  const auto g = stationarity_residuals(inst, candidate);
  const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
  t.stationarity_spread = *hi - *lo;
  return t;
}

std::size_t Lemma1Report::violations() const {
  return static_cast<std::size_t>(
      std::count_if(trials.begin(), trials.end(), [](const Lemma1Trial& t) { return !t.ok; }));
}

Lemma1Report verify_lemma1(std::uint64_t seed, std::size_t trials, std::size_t perturbations,
                           const PolicySolver& solver) {
  if (trials < 1) throw InvalidInput("verify_lemma1 needs at least one trial");
  Lemma1Report rep;
  rep.seed = seed;
  rep.perturbations = perturbations;
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng = Rng::stream(seed, i);
    const TabularInstance inst = random_tabular_instance(rng);
    const auto pi = solver(inst);
    Lemma1Trial t = check_tabular_optimum(inst, pi, rng, perturbations);
    t.trial = i;
    if (t.worst_margin < rep.margin_tolerance) {
      t.ok = false;
      t.failure = "perturbation beats candidate";
    } else if (!(t.stationarity_spread <= rep.stationarity_tolerance)) {
      t.ok = false;
      t.failure = "first-order condition not constant across actions";
    }
    rep.trials.push_back(std::move(t));
  }
  return rep;
}

}  // namespace tppo
