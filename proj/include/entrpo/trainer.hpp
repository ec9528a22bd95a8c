#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "entrpo/advantage.hpp"
#include "entrpo/cartpole_env.hpp"
#include "entrpo/random.hpp"
#include "entrpo/replay_buffer.hpp"
#include "entrpo/tiny_nn.hpp"
#include "entrpo/trust_region.hpp"

namespace entrpo {

enum class Algo { trpo, entrpo };

inline const char* to_string(Algo algo) { return algo == Algo::trpo ? "trpo" : "entrpo"; }

inline Algo parse_algo(const std::string& name) {
  if (name == "trpo") return Algo::trpo;
  if (name == "entrpo") return Algo::entrpo;
  throw std::invalid_argument("unknown algo '" + name + "' (expected trpo or entrpo)");
}

struct TrainConfig {
  Algo algo = Algo::entrpo;
  double gamma = 0.85;
  double entropy_coef = 0.0001;
  double gae_lambda = 0.95;
  bool normalize_advantages = true;
  TrustRegionConfig trust_region;  // its entropy_coef is overwritten by the field above
  int batch_size = 32;
  int epoch_min_timesteps = 1024;
  int max_epochs = 200;
  double value_lr = 1e-3;
  int value_epochs_per_update = 5;
  std::uint64_t seed = 0;
  int solved_window = 100;
  double solved_threshold = 195.0;
  std::size_t buffer_capacity = 50000;
  double buffer_clear_threshold = 195.0;
  EnvParams env;

  TrustRegionConfig resolved_trust_region() const {
    TrustRegionConfig tr = trust_region;
    tr.entropy_coef = entropy_coef;
    return tr;
  }

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
    if (!(entropy_coef >= 0.0) || !std::isfinite(entropy_coef))
      throw std::invalid_argument("entropy_coef must be >= 0");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("gae_lambda must be in [0, 1]");
    resolved_trust_region().validate();
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epoch_min_timesteps < 1) throw std::invalid_argument("epoch_min_timesteps must be >= 1");
    if (max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
    if (!(value_lr > 0.0)) throw std::invalid_argument("value_lr must be > 0");
    if (value_epochs_per_update < 0) throw std::invalid_argument("value_epochs_per_update must be >= 0");
    if (solved_window < 1) throw std::invalid_argument("solved_window must be >= 1");
    if (buffer_capacity < 1) throw std::invalid_argument("buffer_capacity must be >= 1");
    env.validate();
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  int episodes = 0;
  double mean_return = 0.0;
  double min_return = 0.0;
  double max_return = 0.0;
  UpdateDiagnostics diag;
  double value_loss = 0.0;
  bool value_fit_skipped = false;
  bool solved = false;
};

/// Adam with bias correction; state persists across calls.
class Adam {
 public:
  explicit Adam(Eigen::Index size, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)), beta1_(beta1), beta2_(beta2),
        epsilon_(epsilon) {}

  void step(ParamVector& params, const ParamVector& grad, double lr) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double m_scale = 1.0 / (1.0 - std::pow(beta1_, t_));
    const double v_scale = 1.0 / (1.0 - std::pow(beta2_, t_));
    params.array() -= lr * (m_.array() * m_scale) / ((v_.array() * v_scale).sqrt() + epsilon_);
  }

 private:
  Eigen::VectorXd m_, v_;
  double beta1_, beta2_, epsilon_;
  int t_ = 0;
};

struct ValueFunction {
  ParamVector params;
  Adam optimizer;

  explicit ValueFunction(ParamVector p) : params(std::move(p)), optimizer(params.size()) {}
};

/// Plays whole episodes with actions sampled from the policy until at least
/// epoch_min_timesteps steps are gathered. Each trajectory gets returns and
/// GAE advantages (bootstrap 0 at every episode end). When a buffer is given,
/// each finished episode first triggers clear_if_solved and is then pushed.
inline std::vector<Trajectory> collect_epoch(const ParamVector& policy_params, const ParamVector& value_params,
                                             const TrainConfig& cfg, Rng& rng, ReplayBuffer* buffer = nullptr) {
  std::vector<Trajectory> trajectories;
  CartPole env(cfg.env);
  int total_steps = 0;
  while (total_steps < cfg.epoch_min_timesteps) {
    Trajectory traj;
    EnvState state = env.reset(rng);
    while (!env.done()) {
      const PolicyDistribution dist = policy_distribution(policy_params, state);
      const Action action = rng.categorical(dist.probs);
      const int timestep = env.steps();
      const StepResult result = env.step(action);
      Transition t;
      t.state = state;
      t.action = action;
      t.next_state = result.next;
      t.reward = result.reward;
      t.done = result.done;
      t.timestep = timestep;
      traj.transitions.push_back(t);
      state = result.next;
    }
    total_steps += static_cast<int>(traj.size());

    const std::vector<double> rewards = traj.rewards();
    const std::vector<double> returns = returns_to_go(rewards, cfg.gamma);
    std::vector<double> states_value(traj.size() + 1, 0.0);
    Eigen::MatrixXd inputs(4, static_cast<Eigen::Index>(traj.size()));
    for (std::size_t i = 0; i < traj.size(); ++i) inputs.col(static_cast<Eigen::Index>(i)) = to_input(traj.transitions[i].state);
    const Eigen::VectorXd v = values(value_params, inputs);
    for (std::size_t i = 0; i < traj.size(); ++i) states_value[i] = v(static_cast<Eigen::Index>(i));
    const std::vector<double> adv = gae(rewards, states_value, cfg.gamma, cfg.gae_lambda);
    for (std::size_t i = 0; i < traj.size(); ++i) {
      traj.transitions[i].return_to_go = returns[i];
      traj.transitions[i].advantage = adv[i];
    }

    if (buffer) {
      buffer->clear_if_solved(traj.total_reward());
      buffer->push(traj);
    }
    trajectories.push_back(std::move(traj));
  }
  return trajectories;
}

/// Mini-batch squared-error regression of V(s) onto return_to_go. Each of
/// the value_epochs_per_update rounds draws ceil(min(buffer size,
/// epoch_min_timesteps) / batch_size) batches. Returns the mean pre-step
/// batch loss, or nullopt when the buffer holds fewer than batch_size items.
inline std::optional<double> fit_value(ValueFunction& vf, const ReplayBuffer& buffer, const TrainConfig& cfg,
                                       Rng& rng) {
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  if (buffer.size() < batch_size) return std::nullopt;
  const std::size_t covered = std::min(buffer.size(), static_cast<std::size_t>(cfg.epoch_min_timesteps));
  const std::size_t batches_per_round = (covered + batch_size - 1) / batch_size;
  const MlpArchitecture arch = value_architecture();

  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (int round = 0; round < cfg.value_epochs_per_update; ++round) {
    for (std::size_t b = 0; b < batches_per_round; ++b) {
      const auto batch = buffer.sample(batch_size, rng);
      Eigen::MatrixXd inputs(4, static_cast<Eigen::Index>(batch_size));
      Eigen::VectorXd targets(static_cast<Eigen::Index>(batch_size));
      for (std::size_t i = 0; i < batch_size; ++i) {
        inputs.col(static_cast<Eigen::Index>(i)) = to_input((*batch)[i].state);
        targets(static_cast<Eigen::Index>(i)) = (*batch)[i].return_to_go;
      }
      double loss = 0.0;
      const ParamVector grad = gradient(
          arch, vf.params, inputs,
          [&](const Eigen::MatrixXd& out, Eigen::MatrixXd& out_grad) {
            const Eigen::RowVectorXd err = out.row(0) - targets.transpose();
            out_grad.row(0) = 2.0 * err / static_cast<double>(batch_size);
            return err.squaredNorm() / static_cast<double>(batch_size);
          },
          &loss);
      vf.optimizer.step(vf.params, grad, cfg.value_lr);
      loss_sum += loss;
      ++loss_count;
    }
  }
  return loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
}

struct TrainResult {
  std::vector<EpochRecord> records;
  bool halted = false;
  std::string message;
  std::optional<int> solved_epoch;
  ParamVector policy_params;
  ParamVector value_params;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs collect -> fit_value -> trpo_step epochs until max_epochs or until the
/// mean return of the last solved_window episodes reaches solved_threshold.
inline TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  Rng rng(cfg.seed);
  TrainResult result;
  ParamVector policy = init_params(policy_architecture(), rng);
  ValueFunction vf(init_params(value_architecture(), rng));
  ReplayBuffer buffer(cfg.buffer_capacity, cfg.buffer_clear_threshold);
  const TrustRegionConfig tr = cfg.resolved_trust_region();
  const bool use_entropy = cfg.algo == Algo::entrpo;
  std::deque<double> window;
  double window_sum = 0.0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<Trajectory> trajectories = collect_epoch(policy, vf.params, cfg, rng, &buffer);

    EpochRecord record;
    record.epoch = epoch;
    record.episodes = static_cast<int>(trajectories.size());
    record.min_return = std::numeric_limits<double>::infinity();
    record.max_return = -std::numeric_limits<double>::infinity();
    double return_sum = 0.0;
    for (const auto& traj : trajectories) {
      const double ret = traj.total_reward();
      return_sum += ret;
      record.min_return = std::min(record.min_return, ret);
      record.max_return = std::max(record.max_return, ret);
      window.push_back(ret);
      window_sum += ret;
      if (static_cast<int>(window.size()) > cfg.solved_window) {
        window_sum -= window.front();
        window.pop_front();
      }
    }
    record.mean_return = return_sum / static_cast<double>(trajectories.size());
    record.solved = static_cast<int>(window.size()) == cfg.solved_window &&
                    window_sum / static_cast<double>(cfg.solved_window) >= cfg.solved_threshold;

    std::string failure;
    try {
      const std::optional<double> value_loss = fit_value(vf, buffer, cfg, rng);
      record.value_fit_skipped = !value_loss.has_value();
      record.value_loss = value_loss.value_or(0.0);
    } catch (const std::domain_error& e) {
      record.value_loss = std::numeric_limits<double>::quiet_NaN();
      failure = e.what();
    }

    PolicyBatch batch = make_policy_batch(trajectories);
    if (cfg.normalize_advantages && batch.size() >= 2) {
      const std::vector<double> raw(batch.advantages.data(), batch.advantages.data() + batch.size());
      const std::vector<double> normalized = normalize(raw);
      batch.advantages = Eigen::Map<const Eigen::VectorXd>(normalized.data(), batch.size());
    }
    if (failure.empty()) {
      try {
        TrpoStepResult step = trpo_step(policy, batch, tr, use_entropy, cfg.gamma);
        record.diag = step.diag;
        policy = std::move(step.params);
      } catch (const std::domain_error& e) {
        failure = e.what();
      }
    }
    if (!failure.empty()) {
      record.diag.surrogate_before = record.diag.surrogate_after = std::numeric_limits<double>::quiet_NaN();
      record.diag.message = failure;
    }

    const bool finite = failure.empty() && record.diag.finite() && std::isfinite(record.value_loss) &&
                        vf.params.allFinite() && policy.allFinite();
    result.records.push_back(record);
    if (on_epoch) on_epoch(record);
    if (!finite) {
      result.halted = true;
      result.message = "non-finite diagnostics at epoch " + std::to_string(epoch) + "; run halted" +
                       (failure.empty() ? std::string() : " (" + failure + ")");
      break;
    }
    if (record.solved) {
      result.solved_epoch = epoch;
      break;
    }
  }
  result.policy_params = std::move(policy);
  result.value_params = std::move(vf.params);
  return result;
}

}  // namespace entrpo
