#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "entrpo/cartpole_env.hpp"

namespace entrpo {

/// One environment step as stored in rollouts and in the replay memory.
struct Transition {
  EnvState state;
  Action action = 0;
  EnvState next_state;
  double reward = 0.0;
  bool done = false;
  int timestep = 0;  // index within the episode, restarts at 0
  double return_to_go = 0.0;
  double advantage = 0.0;
};

struct Trajectory {
  std::vector<Transition> transitions;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }

  double total_reward() const {
    double sum = 0.0;
    for (const auto& t : transitions) sum += t.reward;
    return sum;
  }

  std::vector<double> rewards() const {
    std::vector<double> r;
    r.reserve(transitions.size());
    for (const auto& t : transitions) r.push_back(t.reward);
    return r;
  }
};

/// R_t = r_t + gamma * R_{t+1}, with R_T = 0 past the end.
inline std::vector<double> returns_to_go(const std::vector<double>& rewards, double gamma) {
  if (rewards.empty()) throw std::invalid_argument("returns_to_go: empty reward sequence");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("returns_to_go: gamma outside [0, 1]");
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (!std::isfinite(rewards[i])) throw std::invalid_argument("returns_to_go: non-finite reward");
    running = rewards[i] + gamma * running;
    out[i] = running;
  }
  return out;
}

/// Generalized advantage estimates. `values` has one more entry than
/// `rewards`: values[T] bootstraps the state after the last step (0 if the
/// episode terminated there).
inline std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                               double gamma, double lambda) {
  if (values.size() != rewards.size() + 1)
    throw std::invalid_argument("gae: values must have length rewards + 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("gae: lambda outside [0, 1]");
  std::vector<double> advantages(rewards.size());
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + gamma * values[i + 1] - values[i];
    running = delta + gamma * lambda * running;
    advantages[i] = running;
  }
  return advantages;
}

/// Zero mean and unit population standard deviation; only centered when the
/// spread is below 1e-8.
inline std::vector<double> normalize(const std::vector<double>& advantages) {
  if (advantages.size() < 2) throw std::invalid_argument("normalize: need at least two values");
  const double n = static_cast<double>(advantages.size());
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / n);
  std::vector<double> out(advantages.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = stddev < 1e-8 ? advantages[i] - mean : (advantages[i] - mean) / stddev;
  return out;
}

}  // namespace entrpo
