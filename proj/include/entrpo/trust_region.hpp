#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "entrpo/advantage.hpp"
#include "entrpo/tiny_nn.hpp"

namespace entrpo {

struct TrustRegionConfig {
  double kl_delta = 0.01;  // nats
  int cg_iters = 10;
  double cg_damping = 0.1;
  double cg_tol = 1e-10;
  double backtrack_coeff = 0.5;
  int backtrack_iters = 10;
  double entropy_coef = 0.0001;

  void validate() const {
    if (!(kl_delta > 0.0)) throw std::invalid_argument("kl_delta must be > 0");
    if (cg_iters < 1) throw std::invalid_argument("cg_iters must be >= 1");
    if (!(cg_damping >= 0.0)) throw std::invalid_argument("cg_damping must be >= 0");
    if (!(cg_tol >= 0.0)) throw std::invalid_argument("cg_tol must be >= 0");
    if (!(backtrack_coeff > 0.0 && backtrack_coeff < 1.0))
      throw std::invalid_argument("backtrack_coeff must be in (0, 1)");
    if (backtrack_iters < 1) throw std::invalid_argument("backtrack_iters must be >= 1");
    if (!(entropy_coef >= 0.0)) throw std::invalid_argument("entropy_coef must be >= 0");
  }
};

struct UpdateDiagnostics {
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double mean_kl = 0.0;       // nats, old -> new
  double mean_entropy = 0.0;  // nats, of the returned policy
  bool step_accepted = false;
  int backtrack_count = 0;
  double cg_residual = 0.0;
  std::string message;

  bool finite() const {
    return std::isfinite(surrogate_before) && std::isfinite(surrogate_after) && std::isfinite(mean_kl) &&
           std::isfinite(mean_entropy) && std::isfinite(cg_residual);
  }
};

inline double entropy(const PolicyDistribution& p) {
  double h = 0.0;
  for (int a = 0; a < kNumActions; ++a)
    if (p.probs[a] > 0.0) h -= p.probs[a] * p.log_probs[a];
  return h;
}

/// KL(p || q) = sum p log(p / q), in nats.
inline double kl_categorical(const PolicyDistribution& p, const PolicyDistribution& q) {
  double kl = 0.0;
  for (int a = 0; a < kNumActions; ++a)
    if (p.probs[a] > 0.0) kl += p.probs[a] * (p.log_probs[a] - q.log_probs[a]);
  return kl;
}

inline double mean_entropy(const std::vector<PolicyDistribution>& dists) {
  double sum = 0.0;
  for (const auto& d : dists) sum += entropy(d);
  return dists.empty() ? 0.0 : sum / static_cast<double>(dists.size());
}

/// On-policy samples for one update. Columns of `states` are network inputs.
struct PolicyBatch {
  Eigen::MatrixXd states;
  std::vector<Action> actions;
  Eigen::VectorXd advantages;
  std::vector<int> timesteps;

  Eigen::Index size() const { return states.cols(); }

  void validate() const {
    const auto n = static_cast<std::size_t>(states.cols());
    if (n == 0) throw std::invalid_argument("PolicyBatch: empty batch");
    if (states.rows() != 4 || actions.size() != n || static_cast<std::size_t>(advantages.size()) != n ||
        timesteps.size() != n)
      throw std::invalid_argument("PolicyBatch: inconsistent field lengths");
  }
};

inline PolicyBatch make_policy_batch(const std::vector<Trajectory>& trajectories) {
  std::size_t n = 0;
  for (const auto& traj : trajectories) n += traj.size();
  PolicyBatch batch;
  batch.states.resize(4, static_cast<Eigen::Index>(n));
  batch.advantages.resize(static_cast<Eigen::Index>(n));
  batch.actions.reserve(n);
  batch.timesteps.reserve(n);
  Eigen::Index j = 0;
  for (const auto& traj : trajectories) {
    for (const auto& t : traj.transitions) {
      batch.states.col(j) = to_input(t.state);
      batch.advantages(j) = t.advantage;
      batch.actions.push_back(t.action);
      batch.timesteps.push_back(t.timestep);
      ++j;
    }
  }
  return batch;
}

namespace detail {

inline void check_old_policy(const std::vector<PolicyDistribution>& old_dist, const PolicyBatch& batch) {
  batch.validate();
  if (static_cast<Eigen::Index>(old_dist.size()) != batch.size())
    throw std::invalid_argument("old policy distribution count does not match batch size");
  for (std::size_t i = 0; i < old_dist.size(); ++i)
    if (old_dist[i].probs[batch.actions[i]] < 1e-12)
      throw std::domain_error("degenerate old policy: pi_old(a|s) < 1e-12");
}

}  // namespace detail

/// Importance-sampled surrogate mean[ratio * A] plus, when alpha != 0, the
/// discounted entropy bonus alpha * mean[gamma^t * H(pi_new(.|s_t))].
/// Fills `grad` with the exact parameter gradient when it is non-null.
inline double evaluate_objective(const std::vector<PolicyDistribution>& old_dist, const ParamVector& params,
                                 const PolicyBatch& batch, double gamma, double alpha,
                                 ParamVector* grad = nullptr) {
  detail::check_old_policy(old_dist, batch);
  const MlpArchitecture arch = policy_architecture();
  const ForwardCache cache = forward_cached(arch, params, batch.states);
  const Eigen::MatrixXd& logits = cache.outputs();
  const Eigen::Index n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  Eigen::MatrixXd output_grad = Eigen::MatrixXd::Zero(logits.rows(), n);
  double surrogate_sum = 0.0;
  double entropy_sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const PolicyDistribution dist = PolicyDistribution::from_logits(logits.col(j));
    const Action a = batch.actions[static_cast<std::size_t>(j)];
    const double ratio = std::exp(dist.log_probs[a] - old_dist[static_cast<std::size_t>(j)].log_probs[a]);
    const double weighted = ratio * batch.advantages(j);
    surrogate_sum += weighted;
    if (grad)
      for (int k = 0; k < kNumActions; ++k)
        output_grad(k, j) = weighted * ((k == a ? 1.0 : 0.0) - dist.probs[k]) * inv_n;

    if (alpha != 0.0) {
      const double discount = std::pow(gamma, batch.timesteps[static_cast<std::size_t>(j)]);
      const double h = entropy(dist);
      entropy_sum += discount * h;
      if (grad)
        for (int k = 0; k < kNumActions; ++k)
          output_grad(k, j) += alpha * discount * (-dist.probs[k] * (dist.log_probs[k] + h)) * inv_n;
    }
  }
  if (grad) *grad = backward(arch, params, cache, output_grad);
  double objective = surrogate_sum * inv_n;
  if (alpha != 0.0) objective += alpha * entropy_sum * inv_n;
  return objective;
}

inline double surrogate(const std::vector<PolicyDistribution>& old_dist, const ParamVector& params,
                        const PolicyBatch& batch) {
  return evaluate_objective(old_dist, params, batch, 1.0, 0.0);
}

inline double entropy_surrogate(const std::vector<PolicyDistribution>& old_dist, const ParamVector& params,
                                const PolicyBatch& batch, double gamma, double alpha) {
  return evaluate_objective(old_dist, params, batch, gamma, alpha);
}

inline double mean_kl(const std::vector<PolicyDistribution>& old_dist, const ParamVector& params,
                      const Eigen::MatrixXd& states) {
  const auto new_dist = policy_distributions(params, states);
  if (new_dist.size() != old_dist.size()) throw std::invalid_argument("mean_kl: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < new_dist.size(); ++i) sum += kl_categorical(old_dist[i], new_dist[i]);
  return sum / static_cast<double>(new_dist.size());
}

/// Gradient of mean KL(old || pi_params) with respect to params.
inline ParamVector mean_kl_gradient(const std::vector<PolicyDistribution>& old_dist, const ParamVector& params,
                                    const Eigen::MatrixXd& states) {
  const MlpArchitecture arch = policy_architecture();
  const ForwardCache cache = forward_cached(arch, params, states);
  const Eigen::Index n = states.cols();
  Eigen::MatrixXd output_grad(kNumActions, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto dist = PolicyDistribution::from_logits(cache.outputs().col(j));
    for (int k = 0; k < kNumActions; ++k)
      output_grad(k, j) = (dist.probs[k] - old_dist[static_cast<std::size_t>(j)].probs[k]) / static_cast<double>(n);
  }
  return backward(arch, params, cache, output_grad);
}

/// Hessian of mean KL(pi_params || pi_theta) at theta = params, applied to a
/// vector, plus damping. At that point the KL Hessian equals J^T M J with J
/// the logit Jacobian and M = diag(p) - p p^T, so each product is one
/// forward-mode pass followed by one reverse pass.
class FisherOperator {
 public:
  FisherOperator(const ParamVector& params, const Eigen::MatrixXd& states, double damping)
      : arch_(policy_architecture()),
        params_(params),
        cache_(forward_cached(arch_, params, states)),
        damping_(damping) {
    const Eigen::Index n = states.cols();
    probs_.resize(kNumActions, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto dist = PolicyDistribution::from_logits(cache_.outputs().col(j));
      for (int k = 0; k < kNumActions; ++k) probs_(k, j) = dist.probs[k];
    }
  }

  ParamVector operator()(const ParamVector& v) const {
    if (v.size() != params_.size()) throw std::invalid_argument("fisher product: vector length mismatch");
    const Eigen::MatrixXd dlogits = jvp(arch_, params_, cache_, v);
    const Eigen::Index n = dlogits.cols();
    Eigen::MatrixXd weighted(kNumActions, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double mean_shift = probs_.col(j).dot(dlogits.col(j));
      weighted.col(j) = probs_.col(j).cwiseProduct(dlogits.col(j)) - probs_.col(j) * mean_shift;
    }
    weighted /= static_cast<double>(n);
    ParamVector result = backward(arch_, params_, cache_, weighted);
    if (damping_ != 0.0) result += damping_ * v;
    return result;
  }

 private:
  MlpArchitecture arch_;
  ParamVector params_;
  ForwardCache cache_;
  Eigen::MatrixXd probs_;
  double damping_;
};

inline ParamVector fisher_vector_product(const ParamVector& params, const Eigen::MatrixXd& states,
                                         const ParamVector& v, double damping) {
  return FisherOperator(params, states, damping)(v);
}

struct CgResult {
  Eigen::VectorXd x;
  double residual = 0.0;  // ||b - A x|| from the recurrence
  int iterations = 0;
};

/// Conjugate gradient for a symmetric positive-definite operator.
inline CgResult conjugate_gradient(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_a,
                                   const Eigen::VectorXd& b, int iters, double tol) {
  CgResult result;
  result.x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b;
  Eigen::VectorXd p = b;
  double rr = r.squaredNorm();
  const double threshold = tol * b.norm();
  for (int i = 0; i < iters; ++i) {
    if (std::sqrt(rr) <= threshold) break;
    const Eigen::VectorXd ap = apply_a(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0)) break;
    const double step = rr / curvature;
    result.x += step * p;
    r -= step * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    result.iterations = i + 1;
  }
  result.residual = std::sqrt(rr);
  return result;
}

struct TrpoStepResult {
  ParamVector params;
  UpdateDiagnostics diag;
};

/// One KL-constrained natural-gradient step on the (entropy-)surrogate.
inline TrpoStepResult trpo_step(const ParamVector& params, const PolicyBatch& batch,
                                const TrustRegionConfig& cfg, bool use_entropy, double gamma) {
  cfg.validate();
  batch.validate();
  const double alpha = use_entropy ? cfg.entropy_coef : 0.0;
  const auto old_dist = policy_distributions(params, batch.states);

  TrpoStepResult result{params, {}};
  UpdateDiagnostics& diag = result.diag;
  ParamVector grad;
  diag.surrogate_before = evaluate_objective(old_dist, params, batch, gamma, alpha, &grad);
  diag.surrogate_after = diag.surrogate_before;
  diag.mean_entropy = mean_entropy(old_dist);

  if (!grad.allFinite() || !std::isfinite(diag.surrogate_before)) {
    diag.message = "non-finite policy gradient; update skipped";
    return result;
  }
  if (grad.squaredNorm() == 0.0) {
    diag.message = "zero policy gradient";
    return result;
  }

  const FisherOperator fisher(params, batch.states, cfg.cg_damping);
  const CgResult cg = conjugate_gradient(fisher, grad, cfg.cg_iters, cfg.cg_tol);
  diag.cg_residual = cg.residual;
  const double curvature = cg.x.dot(fisher(cg.x));
  if (!(curvature > 0.0) || !std::isfinite(curvature)) {
    diag.message = "non-positive curvature along search direction";
    return result;
  }
  const ParamVector full_step = cg.x * std::sqrt(2.0 * cfg.kl_delta / curvature);

  double fraction = 1.0;
  for (int k = 0; k < cfg.backtrack_iters; ++k, fraction *= cfg.backtrack_coeff) {
    const ParamVector candidate = params + fraction * full_step;
    const double kl = mean_kl(old_dist, candidate, batch.states);
    const double objective = evaluate_objective(old_dist, candidate, batch, gamma, alpha);
    if (std::isfinite(kl) && std::isfinite(objective) && kl <= cfg.kl_delta &&
        objective > diag.surrogate_before) {
      result.params = candidate;
      diag.step_accepted = true;
      diag.backtrack_count = k;
      diag.mean_kl = kl;
      diag.surrogate_after = objective;
      diag.mean_entropy = mean_entropy(policy_distributions(candidate, batch.states));
      return result;
    }
  }
  diag.backtrack_count = cfg.backtrack_iters;
  diag.message = "line search found no acceptable step";
  return result;
}

}  // namespace entrpo
