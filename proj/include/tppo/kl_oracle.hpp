#pragma once

// Exact single-state treatment of the KL-regularized policy objective:
//   maximize  sum_a pi(a) A(a) - beta * KL(pi || pi_ref)
// whose maximizer is pi*(a) = pi_ref(a) exp(A(a)/beta) / Z.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tppo {

class Rng;

struct TabularInstance {
  std::vector<double> pi_ref;
  std::vector<double> advantages;
  double beta = 1.0;

  std::size_t actions() const { return pi_ref.size(); }
  /// Throws InvalidInput unless pi_ref is strictly positive, sums to 1 and
  /// matches the advantage vector, and beta > 0.
  void validate() const;
};

/// KL(p || q); +inf when p puts mass where q has none.
double kl_divergence(std::span<const double> p, std::span<const double> q);

double kl_regularized_objective(const TabularInstance& inst, std::span<const double> pi);

/// log Z computed with the max-shift.
double log_partition(const TabularInstance& inst);

std::vector<double> closed_form_optimal_policy(const TabularInstance& inst);

/// A(a) - beta * (1 + log(pi(a) / pi_ref(a))) for every action. Constant
/// across actions exactly at the constrained stationary point.
std::vector<double> stationarity_residuals(const TabularInstance& inst, std::span<const double> pi);

/// m in [2, 8], pi_ref random and strictly positive, A in [-3, 3],
/// beta in [0.1, 5].
TabularInstance random_tabular_instance(Rng& rng);

struct Lemma1Trial {
  std::size_t trial = 0;
  TabularInstance instance;
  std::vector<double> policy;
  double worst_margin = 0.0;  // min over perturbations of J(pi*) - J(pi')
  double stationarity_spread = 0.0;
  bool ok = true;
  std::string failure;
};

struct Lemma1Report {
  std::uint64_t seed = 0;
  std::size_t perturbations = 0;
  double margin_tolerance = -1e-9;
  double stationarity_tolerance = 1e-7;
  std::vector<Lemma1Trial> trials;

  std::size_t violations() const;
  bool passed() const { return violations() == 0; }
};

using PolicySolver = std::function<std::vector<double>(const TabularInstance&)>;

/// Checks a candidate maximizer against `perturbations` random, grid and
/// locally perturbed distributions plus the first-order condition.
Lemma1Trial check_tabular_optimum(const TabularInstance& inst, std::span<const double> candidate,
                                  Rng& rng, std::size_t perturbations);

Lemma1Report verify_lemma1(std::uint64_t seed, std::size_t trials,
                           std::size_t perturbations = 10000,
                           const PolicySolver& solver = closed_form_optimal_policy);

}  // namespace tppo
