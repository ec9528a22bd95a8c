#include <gtest/gtest.h>

#include <cmath>

#include "entrpo/random.hpp"
#include "entrpo/tabular_oracle.hpp"
#include "entrpo/verification.hpp"

using namespace entrpo;
using namespace entrpo::tabular;

namespace {

TabularMDP single_state(double reward, double gamma) {
  TabularMDP mdp;
  mdp.n_states = 1;
  mdp.n_actions = 1;
  mdp.transition = Eigen::MatrixXd::Ones(1, 1);
  mdp.reward = Eigen::MatrixXd::Constant(1, 1, reward);
  mdp.initial_dist = Eigen::VectorXd::Ones(1);
  mdp.gamma = gamma;
  return mdp;
}

// Iterative policy evaluation run to a fixed point; independent of the LU solve.
Eigen::VectorXd evaluate_by_iteration(const TabularMDP& mdp, const TabularPolicy& pi) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(mdp.n_states);
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXd next(mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      double total = 0.0;
      for (int a = 0; a < mdp.n_actions; ++a) {
        double q = mdp.reward(s, a);
        for (int s2 = 0; s2 < mdp.n_states; ++s2) q += mdp.gamma * mdp.p(s, a, s2) * v(s2);
        total += pi.probs(s, a) * q;
      }
      next(s) = total;
    }
    const double change = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (change < 1e-14) break;
  }
  return v;
}

// Truncated power series sum_{t<terms} gamma^t (P_pi^T)^t rho0.
Eigen::VectorXd visitation_series(const TabularMDP& mdp, const TabularPolicy& pi, int terms) {
  const Eigen::MatrixXd pt = policy_transition(mdp, pi).transpose();
  Eigen::VectorXd term = mdp.initial_dist;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(mdp.n_states);
  for (int t = 0; t < terms; ++t) {
    sum += term;
    term = mdp.gamma * pt * term;
  }
  return sum;
}

struct Instance {
  TabularMDP mdp;
  TabularPolicy pi, pi_tilde;
};

Instance random_instance(Rng& rng) {
  const int s = 1 + static_cast<int>(rng.index(5));
  const int a = 1 + static_cast<int>(rng.index(3));
  TabularMDP mdp = random_mdp(rng, s, a);
  return {mdp, random_policy(rng, s, a), random_policy(rng, s, a)};
}

}  // namespace

TEST(ExactValues, SingleStateGeometricSeries) {
  const TabularMDP mdp = single_state(1.0, 0.5);
  const ExactValues v = exact_values(mdp, uniform_policy(1, 1));
  EXPECT_NEAR(v.v(0), 2.0, 1e-15);
  EXPECT_NEAR(v.q(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(v.advantage(0, 0), 0.0, 1e-15);
}

TEST(ExactValues, AdvantageHasZeroPolicyMean) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Instance inst = random_instance(rng);
    const ExactValues v = exact_values(inst.mdp, inst.pi);
    for (int s = 0; s < inst.mdp.n_states; ++s)
      EXPECT_NEAR(inst.pi.probs.row(s).dot(v.advantage.row(s)), 0.0, 1e-12);
  }
}

TEST(ExactValues, MatchesIterativeEvaluation) {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const TabularMDP mdp = random_mdp(rng, 4, 2);
    const TabularPolicy pi = random_policy(rng, 4, 2);
    EXPECT_LE((exact_values(mdp, pi).v - evaluate_by_iteration(mdp, pi)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Visitation, SingleState) { EXPECT_NEAR(visitation(single_state(1.0, 0.5), uniform_policy(1, 1))(0), 2.0, 1e-15); }

TEST(Visitation, TotalMass) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Instance inst = random_instance(rng);
    EXPECT_NEAR(visitation(inst.mdp, inst.pi).sum(), 1.0 / (1.0 - inst.mdp.gamma), 1e-10);
  }
}

TEST(Visitation, MatchesPowerSeries) {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    TabularMDP mdp = random_mdp(rng, 5, 3);
    mdp.gamma = rng.uniform(0.05, 0.4);
    const TabularPolicy pi = random_policy(rng, 5, 3);
    const Eigen::VectorXd rho = visitation(mdp, pi);
    EXPECT_LE((rho - visitation_series(mdp, pi, 50)).cwiseAbs().maxCoeff(), 1e-13);
    // Leading terms rho0 + gamma P^T rho0 agree up to O(gamma^2).
    const Eigen::VectorXd two_terms = visitation_series(mdp, pi, 2);
    EXPECT_LE((rho - two_terms).cwiseAbs().maxCoeff(), mdp.gamma * mdp.gamma / (1.0 - mdp.gamma) + 1e-15);
  }
}

TEST(Eta, SingleStateAndZeroReward) {
  EXPECT_NEAR(eta(single_state(1.0, 0.5), uniform_policy(1, 1)), 2.0, 1e-15);
  Rng rng(5);
  TabularMDP mdp = random_mdp(rng, 3, 2);
  mdp.reward.setZero();
  EXPECT_EQ(eta(mdp, random_policy(rng, 3, 2)), 0.0);
}

TEST(Eta, TwoClosedFormsAgree) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Instance inst = random_instance(rng);
    EXPECT_NEAR(eta(inst.mdp, inst.pi), eta_from_visitation(inst.mdp, inst.pi), 1e-10);
  }
}

TEST(PerformanceDifference, IdenticalPolicies) {
  Rng rng(7);
  const Instance inst = random_instance(rng);
  EXPECT_LE(check_performance_difference(inst.mdp, inst.pi, inst.pi), 1e-12);
}

TEST(PerformanceDifference, RandomPairs) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const Instance inst = random_instance(rng);
    EXPECT_LE(check_performance_difference(inst.mdp, inst.pi, inst.pi_tilde), 1e-8);
  }
}

TEST(PerformanceDifference, GreedyVersusUniform) {
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const TabularMDP mdp = random_mdp(rng, 5, 3);
    const TabularPolicy uniform = uniform_policy(5, 3);
    const TabularPolicy greedy = greedy_policy(exact_values(mdp, uniform).advantage);
    EXPECT_LE(check_performance_difference(mdp, uniform, greedy), 1e-8);
  }
}

TEST(LowerBound, TightAtIdenticalPolicies) {
  Rng rng(10);
  const Instance inst = random_instance(rng);
  const LowerBoundCheck c = check_lower_bound(inst.mdp, inst.pi, inst.pi);
  EXPECT_EQ(c.max_kl, 0.0);
  EXPECT_NEAR(c.lhs, c.rhs, 1e-12);
  EXPECT_NEAR(c.surrogate, eta(inst.mdp, inst.pi), 1e-12);
  EXPECT_TRUE(c.holds);
}

TEST(LowerBound, HoldsOnRandomPairs) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Instance inst = random_instance(rng);
    const LowerBoundCheck c = check_lower_bound(inst.mdp, inst.pi, inst.pi_tilde);
    EXPECT_TRUE(c.holds) << "slack " << c.lhs - c.rhs;
    EXPECT_GE(c.lhs - c.rhs, -1e-9);
  }
}

TEST(LowerBound, ConstantRewardMakesAdvantageVanish) {
  Rng rng(12);
  TabularMDP mdp = random_mdp(rng, 4, 3);
  mdp.reward.setConstant(0.7);
  const TabularPolicy a = random_policy(rng, 4, 3), b = random_policy(rng, 4, 3);
  const LowerBoundCheck c = check_lower_bound(mdp, a, b);
  EXPECT_NEAR(c.penalty_coefficient, 0.0, 1e-12);
  EXPECT_NEAR(c.surrogate, eta(mdp, a), 1e-12);
  EXPECT_NEAR(c.lhs, c.surrogate, 1e-12);
  EXPECT_TRUE(c.holds);
}

TEST(MIdentity, EqualsEtaForAnyPolicy) {
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    const TabularMDP mdp = random_mdp(rng, 5, 3);
    EXPECT_LE(check_m_identity(mdp, random_policy(rng, 5, 3)), 1e-10);
    EXPECT_LE(check_m_identity(mdp, uniform_policy(5, 3)), 1e-10);
    EXPECT_LE(check_m_identity(mdp, greedy_policy(mdp.reward)), 1e-10);
  }
}

TEST(MIdentity, EntropyTermIsNotZeroForStochasticPolicies) {
  Rng rng(14);
  const TabularMDP mdp = random_mdp(rng, 3, 2);
  const TabularPolicy pi = uniform_policy(3, 2);
  // A stochastic policy has positive entropy, so the bonus moves M away from eta.
  EXPECT_GT(m_objective(mdp, pi, pi, 0.5) - eta(mdp, pi), 0.1);
}

TEST(PolicyIteration, HugePenaltyKeepsPolicy) {
  Rng rng(15);
  const TabularMDP mdp = random_mdp(rng, 4, 3);
  const TabularPolicy pi = random_policy(rng, 4, 3);
  const TabularPolicy next = exact_policy_iteration_step(mdp, pi, 1e12);
  EXPECT_LE((next.probs - pi.probs).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(PolicyIteration, ZeroPenaltyMatchesBestDeterministicPolicy) {
  Rng rng(16);
  for (int i = 0; i < 20; ++i) {
    const int n_states = 2 + static_cast<int>(rng.index(3));
    const int n_actions = 2 + static_cast<int>(rng.index(2));
    const TabularMDP mdp = random_mdp(rng, n_states, n_actions);
    const TabularPolicy pi = random_policy(rng, n_states, n_actions);
    // Enumerate every deterministic policy; L is linear in pi so one of them is optimal.
    double best = -std::numeric_limits<double>::infinity();
    int total = 1;
    for (int s = 0; s < n_states; ++s) total *= n_actions;
    for (int code = 0; code < total; ++code) {
      TabularPolicy det{Eigen::MatrixXd::Zero(n_states, n_actions)};
      int c = code;
      for (int s = 0; s < n_states; ++s, c /= n_actions) det.probs(s, c % n_actions) = 1.0;
      best = std::max(best, local_approximation(mdp, pi, det));
    }
    const TabularPolicy next = exact_policy_iteration_step(mdp, pi, 0.0);
    EXPECT_NEAR(local_approximation(mdp, pi, next), best, 1e-12);
  }
}

TEST(PolicyIteration, ObjectiveNeverBelowStart) {
  Rng rng(17);
  for (int i = 0; i < 20; ++i) {
    const TabularMDP mdp = random_mdp(rng, 4, 3);
    const TabularPolicy pi = random_policy(rng, 4, 3);
    for (double c : {0.0, 0.3, 1.0, 10.0, 100.0}) {
      const TabularPolicy next = exact_policy_iteration_step(mdp, pi, c);
      next.validate(mdp);
      EXPECT_GE(penalized_objective(mdp, pi, next, c), penalized_objective(mdp, pi, pi, c) - 1e-12);
    }
  }
}

TEST(PolicyIteration, EtaNonDecreasingAlongIterates) {
  Rng rng(18);
  for (int i = 0; i < 20; ++i) {
    const TabularMDP mdp = random_mdp(rng, 2 + static_cast<int>(rng.index(4)), 2 + static_cast<int>(rng.index(2)));
    const TabularPolicy start = random_policy(rng, mdp.n_states, mdp.n_actions);
    for (double c : {0.0, 1.0, 10.0}) {
      TabularPolicy pi = start;
      double prev = eta(mdp, pi);
      for (int it = 0; it < 10; ++it) {
        pi = exact_policy_iteration_step(mdp, pi, c);
        const double next = eta(mdp, pi);
        EXPECT_GE(next, prev - 1e-12) << "C=" << c << " iteration " << it;
        prev = next;
      }
    }
  }
}

TEST(PolicyIteration, ModeratePenaltyMovesTowardGreedy) {
  Rng rng(19);
  const TabularMDP mdp = random_mdp(rng, 3, 2);
  const TabularPolicy pi = uniform_policy(3, 2);
  const TabularPolicy next = exact_policy_iteration_step(mdp, pi, 1.0);
  EXPECT_GT(eta(mdp, next), eta(mdp, pi));
  EXPECT_GT(max_kl(pi, next), 0.0);
}

TEST(TabularValidation, RejectsMalformedInputs) {
  TabularMDP mdp = single_state(1.0, 0.5);
  mdp.gamma = 1.0;
  EXPECT_THROW(mdp.validate(), std::invalid_argument);
  mdp = single_state(1.0, 0.5);
  mdp.transition(0, 0) = 0.9;
  EXPECT_THROW(mdp.validate(), std::invalid_argument);
  mdp = single_state(1.0, 0.5);
  EXPECT_THROW(exact_values(mdp, TabularPolicy{Eigen::MatrixXd::Constant(1, 1, 0.5)}), std::invalid_argument);
}

TEST(Verification, ReportIsDeterministicAndPasses) {
  VerificationOptions opts;
  opts.instances = 25;
  opts.iteration_instances = 5;
  const VerificationReport a = run_verification(opts);
  const VerificationReport b = run_verification(opts);
  EXPECT_TRUE(a.passed());
  const auto ca = a.checks(), cb = b.checks();
  for (std::size_t i = 0; i < ca.size(); ++i) {
    EXPECT_EQ(ca[i]->worst, cb[i]->worst);
    EXPECT_EQ(ca[i]->cases, cb[i]->cases);
  }
  EXPECT_EQ(a.policy_iteration.cases, 5u * 3u * 10u);
}
