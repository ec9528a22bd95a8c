#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "entrpo/random.hpp"

namespace entrpo::tabular {

/// Finite MDP. Row s * n_actions + a of `transition` is P(. | s, a).
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd transition;
  Eigen::MatrixXd reward;  // n_states x n_actions
  Eigen::VectorXd initial_dist;
  double gamma = 0.9;

  double p(int s, int a, int next) const { return transition(s * n_actions + a, next); }

  void validate() const {
    if (n_states < 1 || n_actions < 1) throw std::invalid_argument("TabularMDP: empty state or action set");
    if (transition.rows() != n_states * n_actions || transition.cols() != n_states)
      throw std::invalid_argument("TabularMDP: transition has wrong shape");
    if (reward.rows() != n_states || reward.cols() != n_actions)
      throw std::invalid_argument("TabularMDP: reward has wrong shape");
    if (initial_dist.size() != n_states) throw std::invalid_argument("TabularMDP: rho0 has wrong length");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMDP: gamma outside (0, 1)");
    if ((transition.array() < 0.0).any() || (initial_dist.array() < 0.0).any())
      throw std::invalid_argument("TabularMDP: negative probability");
    for (Eigen::Index r = 0; r < transition.rows(); ++r)
      if (std::abs(transition.row(r).sum() - 1.0) > 1e-12)
        throw std::invalid_argument("TabularMDP: transition row does not sum to 1");
    if (std::abs(initial_dist.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("TabularMDP: rho0 does not sum to 1");
  }
};

/// Stochastic policy, probs(s, a) = pi(a | s).
struct TabularPolicy {
  Eigen::MatrixXd probs;

  void validate(const TabularMDP& mdp) const {
    if (probs.rows() != mdp.n_states || probs.cols() != mdp.n_actions)
      throw std::invalid_argument("TabularPolicy: shape does not match MDP");
    if ((probs.array() < 0.0).any()) throw std::invalid_argument("TabularPolicy: negative probability");
    for (Eigen::Index s = 0; s < probs.rows(); ++s)
      if (std::abs(probs.row(s).sum() - 1.0) > 1e-12)
        throw std::invalid_argument("TabularPolicy: row does not sum to 1");
  }
};

inline Eigen::MatrixXd policy_transition(const TabularMDP& mdp, const TabularPolicy& pi) {
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      p_pi.row(s) += pi.probs(s, a) * mdp.transition.row(s * mdp.n_actions + a);
  return p_pi;
}

inline Eigen::VectorXd policy_reward(const TabularMDP& mdp, const TabularPolicy& pi) {
  return mdp.reward.cwiseProduct(pi.probs).rowwise().sum();
}

struct ExactValues {
  Eigen::VectorXd v;
  Eigen::MatrixXd q;
  Eigen::MatrixXd advantage;
};

/// Direct solve of (I - gamma P_pi) V = r_pi, then Q and A = Q - V.
inline ExactValues exact_values(const TabularMDP& mdp, const TabularPolicy& pi) {
  mdp.validate();
  pi.validate(mdp);
  const Eigen::Index n = mdp.n_states;
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - mdp.gamma * policy_transition(mdp, pi);
  ExactValues out;
  out.v = system.fullPivLu().solve(policy_reward(mdp, pi));
  out.q.resize(n, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      out.q(s, a) = mdp.reward(s, a) + mdp.gamma * mdp.transition.row(s * mdp.n_actions + a).dot(out.v);
  out.advantage = out.q.colwise() - out.v;
  return out;
}

/// Discounted visitation rho = rho0 + gamma P_pi^T rho.
inline Eigen::VectorXd visitation(const TabularMDP& mdp, const TabularPolicy& pi) {
  mdp.validate();
  pi.validate(mdp);
  const Eigen::Index n = mdp.n_states;
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(n, n) - mdp.gamma * policy_transition(mdp, pi).transpose();
  return system.fullPivLu().solve(mdp.initial_dist);
}

inline double eta(const TabularMDP& mdp, const TabularPolicy& pi) {
  return mdp.initial_dist.dot(exact_values(mdp, pi).v);
}

/// Same objective through the visitation measure: sum_s rho(s) sum_a pi r.
inline double eta_from_visitation(const TabularMDP& mdp, const TabularPolicy& pi) {
  return visitation(mdp, pi).dot(policy_reward(mdp, pi));
}

inline double kl_row(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q) {
  double kl = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p(a) <= 0.0) continue;
    if (q(a) <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p(a) * std::log(p(a) / q(a));
  }
  return kl;
}

inline double entropy_row(const Eigen::RowVectorXd& p) {
  double h = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a)
    if (p(a) > 0.0) h -= p(a) * std::log(p(a));
  return h;
}

/// max_s KL(pi_old(.|s) || pi_new(.|s)).
inline double max_kl(const TabularPolicy& pi_old, const TabularPolicy& pi_new) {
  double worst = 0.0;
  for (Eigen::Index s = 0; s < pi_old.probs.rows(); ++s)
    worst = std::max(worst, kl_row(pi_old.probs.row(s), pi_new.probs.row(s)));
  return worst;
}

/// sum_s weights(s) sum_a pi_tilde(a|s) A(s, a).
inline double weighted_advantage(const Eigen::VectorXd& weights, const Eigen::MatrixXd& advantage,
                                 const TabularPolicy& pi_tilde) {
  return weights.dot(pi_tilde.probs.cwiseProduct(advantage).rowwise().sum());
}

/// Local approximation L_pi(pi_tilde): the visitation of pi stands in for that of pi_tilde.
inline double local_approximation(const TabularMDP& mdp, const TabularPolicy& pi, const TabularPolicy& pi_tilde) {
  const ExactValues values = exact_values(mdp, pi);
  return mdp.initial_dist.dot(values.v) + weighted_advantage(visitation(mdp, pi), values.advantage, pi_tilde);
}

/// 4 * eps * gamma / (1 - gamma)^2 with eps = max |A_pi|.
inline double bound_penalty_coefficient(const TabularMDP& mdp, const TabularPolicy& pi) {
  const double eps = exact_values(mdp, pi).advantage.cwiseAbs().maxCoeff();
  return 4.0 * eps * mdp.gamma / ((1.0 - mdp.gamma) * (1.0 - mdp.gamma));
}

/// Entropy-augmented lower-bound objective of pi_tilde around pi:
///   L_pi(pi_tilde) + coef * sum_s rho_pi(s) H(pi_tilde(.|s)) - c * Dmax^2
/// where c = 4 eps gamma / (1-gamma)^2 and Dmax = max-KL(pi, pi_tilde).
/// The discounted visitation carries the gamma^t weight of the entropy bonus.
inline double m_objective(const TabularMDP& mdp, const TabularPolicy& pi, const TabularPolicy& pi_tilde,
                          double entropy_coef) {
  const ExactValues values = exact_values(mdp, pi);
  const Eigen::VectorXd rho = visitation(mdp, pi);
  double entropy_bonus = 0.0;
  if (entropy_coef != 0.0)
    for (int s = 0; s < mdp.n_states; ++s) entropy_bonus += rho(s) * entropy_row(pi_tilde.probs.row(s));
  const double d_max = max_kl(pi, pi_tilde);
  const double eps = values.advantage.cwiseAbs().maxCoeff();
  const double c = 4.0 * eps * mdp.gamma / ((1.0 - mdp.gamma) * (1.0 - mdp.gamma));
  const double penalty = d_max == 0.0 ? 0.0 : c * d_max * d_max;
  return mdp.initial_dist.dot(values.v) + weighted_advantage(rho, values.advantage, pi_tilde) +
         entropy_coef * entropy_bonus - penalty;
}

/// |eta(pi_tilde) - eta(pi) - sum_s rho_tilde(s) sum_a pi_tilde A_pi|.
inline double check_performance_difference(const TabularMDP& mdp, const TabularPolicy& pi,
                                           const TabularPolicy& pi_tilde) {
  const ExactValues values = exact_values(mdp, pi);
  const double lhs = eta(mdp, pi_tilde);
  const double rhs =
      mdp.initial_dist.dot(values.v) + weighted_advantage(visitation(mdp, pi_tilde), values.advantage, pi_tilde);
  return std::abs(lhs - rhs);
}

struct LowerBoundCheck {
  double lhs = 0.0;          // eta(pi_new)
  double rhs = 0.0;          // L - c * Dmax
  bool holds = false;        // lhs >= rhs - 1e-9
  double surrogate = 0.0;    // L_{pi_old}(pi_new)
  double max_kl = 0.0;
  double penalty_coefficient = 0.0;
  // Alternative readings of the penalty exponent / coefficient; reported only.
  double rhs_kl_squared = 0.0;          // L - c * Dmax^2
  bool holds_kl_squared = false;
  double rhs_entropy_coefficient = 0.0; // M with alpha read as the entropy coefficient
  bool holds_entropy_coefficient = false;
};

inline LowerBoundCheck check_lower_bound(const TabularMDP& mdp, const TabularPolicy& pi_old,
                                         const TabularPolicy& pi_new, double entropy_coef = 0.0001) {
  const ExactValues values = exact_values(mdp, pi_old);
  const Eigen::VectorXd rho = visitation(mdp, pi_old);
  LowerBoundCheck out;
  out.lhs = eta(mdp, pi_new);
  out.surrogate = mdp.initial_dist.dot(values.v) + weighted_advantage(rho, values.advantage, pi_new);
  out.max_kl = max_kl(pi_old, pi_new);
  const double eps = values.advantage.cwiseAbs().maxCoeff();
  out.penalty_coefficient = 4.0 * eps * mdp.gamma / ((1.0 - mdp.gamma) * (1.0 - mdp.gamma));
  const auto penalty = [&](double d) { return d == 0.0 ? 0.0 : out.penalty_coefficient * d; };
  out.rhs = out.surrogate - penalty(out.max_kl);
  out.holds = out.lhs >= out.rhs - 1e-9;
  out.rhs_kl_squared = out.surrogate - penalty(out.max_kl * out.max_kl);
  out.holds_kl_squared = out.lhs >= out.rhs_kl_squared - 1e-9;
  double entropy_bonus = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) entropy_bonus += rho(s) * entropy_row(pi_new.probs.row(s));
  out.rhs_entropy_coefficient =
      out.surrogate + entropy_coef * entropy_bonus - out.penalty_coefficient * entropy_coef * entropy_coef;
  out.holds_entropy_coefficient = out.lhs >= out.rhs_entropy_coefficient - 1e-9;
  return out;
}

/// |M_pi(pi) - eta(pi)| with no entropy bonus.
inline double check_m_identity(const TabularMDP& mdp, const TabularPolicy& pi) {
  return std::abs(m_objective(mdp, pi, pi, 0.0) - eta(mdp, pi));
}

/// L_{pi_i}(pi) - C * max-KL(pi_i, pi).
inline double penalized_objective(const TabularMDP& mdp, const TabularPolicy& pi_i, const TabularPolicy& pi,
                                  double penalty) {
  const double kl_term = penalty == 0.0 ? 0.0 : penalty * max_kl(pi_i, pi);
  return local_approximation(mdp, pi_i, pi) - kl_term;
}

inline TabularPolicy greedy_policy(const Eigen::MatrixXd& advantage) {
  TabularPolicy greedy{Eigen::MatrixXd::Zero(advantage.rows(), advantage.cols())};
  for (Eigen::Index s = 0; s < advantage.rows(); ++s) {
    Eigen::Index best = 0;
    advantage.row(s).maxCoeff(&best);
    greedy.probs(s, best) = 1.0;
  }
  return greedy;
}

namespace detail {

// Coordinate ascent on sum_s rho(s) sum_a pi A - C * max_s KL_s by moving
// probability mass between action pairs of one state at a time. Each move
// is concave in the amount moved, so a golden-section search finds it.
class PenalizedAscent {
 public:
  PenalizedAscent(const Eigen::VectorXd& rho, const Eigen::MatrixXd& advantage, const TabularPolicy& anchor,
                  double penalty)
      : rho_(rho), advantage_(advantage), anchor_(anchor), penalty_(penalty) {}

  double objective(const TabularPolicy& pi) const {
    double kl_max = 0.0;
    if (penalty_ != 0.0)
      for (Eigen::Index s = 0; s < pi.probs.rows(); ++s)
        kl_max = std::max(kl_max, kl_row(anchor_.probs.row(s), pi.probs.row(s)));
    return weighted_advantage(rho_, advantage_, pi) - (penalty_ == 0.0 ? 0.0 : penalty_ * kl_max);
  }

  TabularPolicy run(TabularPolicy pi, int max_sweeps = 300) const {
    const Eigen::Index n_states = pi.probs.rows();
    const Eigen::Index n_actions = pi.probs.cols();
    std::vector<double> kl(static_cast<std::size_t>(n_states), 0.0);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      double improvement = 0.0;
      for (Eigen::Index s = 0; s < n_states; ++s) {
        for (Eigen::Index s2 = 0; s2 < n_states; ++s2)
          kl[static_cast<std::size_t>(s2)] = kl_row(anchor_.probs.row(s2), pi.probs.row(s2));
        double others = 0.0;
        for (Eigen::Index s2 = 0; s2 < n_states; ++s2)
          if (s2 != s) others = std::max(others, kl[static_cast<std::size_t>(s2)]);
        for (Eigen::Index to = 0; to < n_actions; ++to) {
          for (Eigen::Index from = 0; from < n_actions; ++from) {
            if (to == from) continue;
            const double gap = advantage_(s, to) - advantage_(s, from);
            const double available = pi.probs(s, from);
            if (!(gap > 0.0) || !(available > 0.0)) continue;
            const auto gain = [&](double t) {
              Eigen::RowVectorXd row = pi.probs.row(s);
              row(to) += t;
              row(from) -= t;
              const double kl_term =
                  penalty_ == 0.0 ? 0.0 : penalty_ * std::max(others, kl_row(anchor_.probs.row(s), row));
              return rho_(s) * gap * t - kl_term;
            };
            const double base = gain(0.0);
            double best_t = available;
            double best = gain(available);
            const double t_star = golden_section_max(gain, 0.0, available);
            const double at_star = gain(t_star);
            if (at_star > best) {
              best = at_star;
              best_t = t_star;
            }
            if (best > base) {
              pi.probs(s, to) += best_t;
              pi.probs(s, from) = best_t == available ? 0.0 : pi.probs(s, from) - best_t;
              improvement += best - base;
            }
          }
        }
      }
      if (improvement < 1e-15) break;
    }
    return pi;
  }

 private:
  template <typename F>
  static double golden_section_max(const F& f, double lo, double hi) {
    constexpr double kInvPhi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < 200 && (b - a) > 1e-16 * std::max(1.0, std::abs(b)); ++i) {
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - kInvPhi * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + kInvPhi * (b - a);
        fd = f(d);
      }
    }
    return 0.5 * (a + b);
  }

  const Eigen::VectorXd& rho_;
  const Eigen::MatrixXd& advantage_;
  const TabularPolicy& anchor_;
  double penalty_;
};

}  // namespace detail

/// Approximately maximizes L_{pi_i}(pi) - C * max-KL(pi_i, pi) over
/// stochastic policies. Never returns a policy scoring below pi_i, and every
/// returned state row has non-negative expected advantage under pi_i.
inline TabularPolicy exact_policy_iteration_step(const TabularMDP& mdp, const TabularPolicy& pi_i, double penalty) {
  if (!(penalty >= 0.0)) throw std::invalid_argument("policy iteration: penalty must be >= 0");
  const ExactValues values = exact_values(mdp, pi_i);
  const Eigen::VectorXd rho = visitation(mdp, pi_i);
  const detail::PenalizedAscent ascent(rho, values.advantage, pi_i, penalty);

  std::vector<TabularPolicy> starts{pi_i};
  const TabularPolicy greedy = greedy_policy(values.advantage);
  if (penalty == 0.0) {
    starts.push_back(greedy);
  } else if (std::isfinite(penalty)) {
    for (double blend : {1e-3, 1e-1, 0.5})
      starts.push_back(TabularPolicy{(1.0 - blend) * greedy.probs + blend * pi_i.probs});
  }

  TabularPolicy best = pi_i;
  double best_value = ascent.objective(pi_i);
  for (const auto& start : starts) {
    TabularPolicy candidate = ascent.run(start);
    // A row with negative expected advantage is never better than the
    // anchor row: reverting it raises L and cannot raise the max-KL.
    for (int s = 0; s < mdp.n_states; ++s)
      if (candidate.probs.row(s).dot(values.advantage.row(s)) < 0.0) candidate.probs.row(s) = pi_i.probs.row(s);
    for (int s = 0; s < mdp.n_states; ++s) candidate.probs.row(s) /= candidate.probs.row(s).sum();
    const double value = ascent.objective(candidate);
    if (value > best_value) {
      best_value = value;
      best = candidate;
    }
  }
  return best;
}

/// Flat-Dirichlet transition rows and rho0, rewards uniform on [-1, 1],
/// gamma uniform on [0.5, 0.95].
inline TabularMDP random_mdp(Rng& rng, int n_states, int n_actions) {
  const auto dirichlet = [&](int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.exponential();
    return Eigen::VectorXd(v / v.sum());
  };
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.transition.resize(n_states * n_actions, n_states);
  for (int r = 0; r < n_states * n_actions; ++r) mdp.transition.row(r) = dirichlet(n_states).transpose();
  mdp.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = rng.uniform(-1.0, 1.0);
  mdp.initial_dist = dirichlet(n_states);
  mdp.gamma = rng.uniform(0.5, 0.95);
  return mdp;
}

/// Softmax of logits uniform on [-logit_scale, logit_scale]; all entries positive.
inline TabularPolicy random_policy(Rng& rng, int n_states, int n_actions, double logit_scale = 2.0) {
  TabularPolicy pi{Eigen::MatrixXd(n_states, n_actions)};
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) pi.probs(s, a) = std::exp(rng.uniform(-logit_scale, logit_scale));
    pi.probs.row(s) /= pi.probs.row(s).sum();
  }
  return pi;
}

inline TabularPolicy uniform_policy(int n_states, int n_actions) {
  return TabularPolicy{Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions)};
}

}  // namespace entrpo::tabular
