#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "entrpo/random.hpp"

namespace entrpo {

/// Physical state of the cart-pole system.
struct EnvState {
  double x = 0.0;          // cart position (m)
  double x_dot = 0.0;      // cart velocity (m/s)
  double theta = 0.0;      // pole angle from vertical (rad)
  double theta_dot = 0.0;  // pole angular velocity (rad/s)

  bool operator==(const EnvState&) const = default;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(x_dot) && std::isfinite(theta) &&
           std::isfinite(theta_dot);
  }
};

/// Binary action label: 0 pushes left, 1 pushes right.
using Action = int;
inline constexpr int kNumActions = 2;

struct EnvParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double force_magnitude = 10.0;
  double step_dt = 0.02;
  int max_episode_steps = 200;
  double theta_threshold = 15.0 * std::numbers::pi / 180.0;
  double x_threshold = 2.4;

  void validate() const {
    const auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string("EnvParams: ") + name + " must be positive");
    };
    positive(gravity, "gravity");
    positive(cart_mass, "cart_mass");
    positive(pole_mass, "pole_mass");
    positive(pole_half_length, "pole_half_length");
    positive(force_magnitude, "force_magnitude");
    positive(step_dt, "step_dt");
    positive(theta_threshold, "theta_threshold");
    positive(x_threshold, "x_threshold");
    if (step_dt >= 1.0) throw std::invalid_argument("EnvParams: step_dt must be < 1");
    if (max_episode_steps < 1)
      throw std::invalid_argument("EnvParams: max_episode_steps must be positive");
  }
};

inline bool out_of_bounds(const EnvState& s, const EnvParams& params) {
  return std::abs(s.x) > params.x_threshold || std::abs(s.theta) > params.theta_threshold;
}

/// Each coordinate uniform on [-0.05, 0.05].
template <UniformSource Source>
EnvState reset(Source& rng) {
  EnvState s;
  s.x = rng.uniform(-0.05, 0.05);
  s.x_dot = rng.uniform(-0.05, 0.05);
  s.theta = rng.uniform(-0.05, 0.05);
  s.theta_dot = rng.uniform(-0.05, 0.05);
  return s;
}

/// One explicit-Euler step of the frictionless cart-pole equations of motion.
inline EnvState integrate(const EnvState& s, Action action, const EnvParams& p) {
  const double force = action == 1 ? p.force_magnitude : -p.force_magnitude;
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pole_moment = p.pole_mass * p.pole_half_length;
  const double cos_theta = std::cos(s.theta);
  const double sin_theta = std::sin(s.theta);

  const double temp = (force + pole_moment * s.theta_dot * s.theta_dot * sin_theta) / total_mass;
  const double theta_acc =
      (p.gravity * sin_theta - cos_theta * temp) /
      (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_theta * cos_theta / total_mass));
  const double x_acc = temp - pole_moment * theta_acc * cos_theta / total_mass;

  EnvState next;
  next.x = s.x + p.step_dt * s.x_dot;
  next.x_dot = s.x_dot + p.step_dt * x_acc;
  next.theta = s.theta + p.step_dt * s.theta_dot;
  next.theta_dot = s.theta_dot + p.step_dt * theta_acc;
  return next;
}

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
};

/// Advances a non-terminal state. `steps_taken` counts the steps already
/// taken in the episode, so the step that reaches max_episode_steps is done.
inline StepResult step(const EnvState& state, Action action, const EnvParams& params,
                       int steps_taken = 0) {
  if (action != 0 && action != 1) throw std::invalid_argument("cartpole step: action must be 0 or 1");
  if (!state.finite() || out_of_bounds(state, params))
    throw std::logic_error("cartpole step: cannot step a terminal state");
  if (steps_taken >= params.max_episode_steps)
    throw std::logic_error("cartpole step: episode step limit already reached");

  StepResult result;
  result.next = integrate(state, action, params);
  result.reward = 1.0;
  result.done = out_of_bounds(result.next, params) || !result.next.finite() ||
                steps_taken + 1 >= params.max_episode_steps;
  return result;
}

/// Episode wrapper tracking the step count and refusing to continue past done.
class CartPole {
 public:
  explicit CartPole(EnvParams params = {}) : params_(params) { params_.validate(); }

  template <UniformSource Source>
  const EnvState& reset(Source& rng) {
    state_ = ::entrpo::reset(rng);
    steps_ = 0;
    done_ = false;
    return state_;
  }

  StepResult step(Action action) {
    if (done_) throw std::logic_error("CartPole::step called after episode end");
    StepResult result = ::entrpo::step(state_, action, params_, steps_);
    state_ = result.next;
    ++steps_;
    done_ = result.done;
    return result;
  }

  const EnvState& state() const { return state_; }
  const EnvParams& params() const { return params_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }

 private:
  EnvParams params_;
  EnvState state_{};
  int steps_ = 0;
  bool done_ = true;
};

}  // namespace entrpo
