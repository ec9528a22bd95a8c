#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "entrpo/random.hpp"
#include "entrpo/tabular_oracle.hpp"

namespace entrpo::tabular {

/// Worst case of one identity or bound over all generated instances.
/// For "slack" checks `worst` is the smallest slack and must stay >= tolerance;
/// otherwise it is the largest residual and must stay <= tolerance.
struct CheckSummary {
  std::string name;
  bool slack = false;
  double tolerance = 0.0;
  double worst = 0.0;
  std::size_t cases = 0;
  std::size_t failures = 0;

  void record(double v) {
    ++cases;
    if (cases == 1) {
      worst = v;
    } else {
      worst = slack ? std::min(worst, v) : std::max(worst, v);
    }
    const bool ok = slack ? v >= tolerance : v <= tolerance;
    if (!ok) ++failures;
  }

  bool passed() const { return cases > 0 && failures == 0; }
};

struct VerificationOptions {
  int instances = 100;
  std::uint64_t seed = 7;
  int max_states = 5;
  int max_actions = 3;
  int policy_pairs = 3;
  int iteration_instances = 20;
  int iterations = 10;
  std::vector<double> penalties{0.0, 1.0, 10.0};
  double entropy_coef = 0.0001;
};

struct VerificationReport {
  CheckSummary performance_difference{"performance_difference", false, 1e-8};
  CheckSummary lower_bound{"trpo_lower_bound", true, -1e-9};
  CheckSummary m_identity{"m_identity", false, 1e-10};
  CheckSummary policy_iteration{"policy_iteration_monotone", false, 1e-12};
  CheckSummary visitation_mass{"visitation_mass", false, 1e-10};
  // Reported, not asserted: the bound with alternative penalty readings.
  std::size_t kl_squared_violations = 0;
  std::size_t entropy_coef_reading_violations = 0;
  std::size_t bound_cases = 0;

  std::vector<const CheckSummary*> checks() const {
    return {&performance_difference, &lower_bound, &m_identity, &policy_iteration, &visitation_mass};
  }

  bool passed() const {
    for (const auto* c : checks())
      if (!c->passed()) return false;
    return true;
  }
};

/// Random MDPs with 2..max_states states and 2..max_actions actions.
inline VerificationReport run_verification(const VerificationOptions& opts) {
  VerificationReport report;
  Rng rng(opts.seed);
  for (int i = 0; i < opts.instances; ++i) {
    const int n_states = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(opts.max_states - 1)));
    const int n_actions = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(opts.max_actions - 1)));
    const TabularMDP mdp = random_mdp(rng, n_states, n_actions);

    for (int k = 0; k < opts.policy_pairs; ++k) {
      const TabularPolicy pi = random_policy(rng, n_states, n_actions);
      const TabularPolicy pi_tilde = random_policy(rng, n_states, n_actions);

      report.performance_difference.record(check_performance_difference(mdp, pi, pi_tilde));

      const LowerBoundCheck bound = check_lower_bound(mdp, pi, pi_tilde, opts.entropy_coef);
      report.lower_bound.record(bound.lhs - bound.rhs);
      ++report.bound_cases;
      if (!bound.holds_kl_squared) ++report.kl_squared_violations;
      if (!bound.holds_entropy_coefficient) ++report.entropy_coef_reading_violations;

      report.m_identity.record(check_m_identity(mdp, pi));
      report.visitation_mass.record(std::abs(visitation(mdp, pi).sum() - 1.0 / (1.0 - mdp.gamma)));
    }

    if (i < opts.iteration_instances) {
      const TabularPolicy start = random_policy(rng, n_states, n_actions);
      for (double penalty : opts.penalties) {
        TabularPolicy pi = start;
        double prev = eta(mdp, pi);
        for (int it = 0; it < opts.iterations; ++it) {
          pi = exact_policy_iteration_step(mdp, pi, penalty);
          const double next = eta(mdp, pi);
          report.policy_iteration.record(std::max(0.0, prev - next));
          prev = next;
        }
      }
    }
  }
  return report;
}

}  // namespace entrpo::tabular
