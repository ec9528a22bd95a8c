#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "entrpo/trainer.hpp"

namespace entrpo {

/// 17 significant digits: enough to round-trip any double.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw std::invalid_argument(key + ": expected a number, got '" + text + "'");
  return v;
}

inline long long parse_integer(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw std::invalid_argument(key + ": expected an integer, got '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + text + "'");
}

struct Setting {
  std::string key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename Field>
Setting real_setting(std::string key, Field field) {
  return {key, [field](const TrainConfig& c) {
            TrainConfig copy = c;
            return format_real(field(copy));
          },
          [field, key](TrainConfig& c, const std::string& v) { field(c) = parse_real(key, v); }};
}

template <typename Field>
Setting integer_setting(std::string key, Field field) {
  return {key, [field](const TrainConfig& c) {
            TrainConfig copy = c;
            return std::to_string(field(copy));
          },
          [field, key](TrainConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(field(c))>;
            const long long parsed = parse_integer(key, v);
            if constexpr (std::is_unsigned_v<T>)
              if (parsed < 0) throw std::invalid_argument(key + ": must be non-negative");
            field(c) = static_cast<T>(parsed);
          }};
}

inline const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = [] {
    std::vector<Setting> t;
    t.push_back({"algo", [](const TrainConfig& c) { return std::string(to_string(c.algo)); },
                 [](TrainConfig& c, const std::string& v) { c.algo = parse_algo(v); }});
    t.push_back(real_setting("gamma", [](TrainConfig& c) -> double& { return c.gamma; }));
    t.push_back(real_setting("entropy_coef", [](TrainConfig& c) -> double& { return c.entropy_coef; }));
    t.push_back(real_setting("gae_lambda", [](TrainConfig& c) -> double& { return c.gae_lambda; }));
    t.push_back({"normalize_advantages",
                 [](const TrainConfig& c) { return std::string(c.normalize_advantages ? "true" : "false"); },
                 [](TrainConfig& c, const std::string& v) {
                   c.normalize_advantages = parse_bool("normalize_advantages", v);
                 }});
    t.push_back(real_setting("kl_delta", [](TrainConfig& c) -> double& { return c.trust_region.kl_delta; }));
    t.push_back(integer_setting("cg_iters", [](TrainConfig& c) -> int& { return c.trust_region.cg_iters; }));
    t.push_back(real_setting("cg_damping", [](TrainConfig& c) -> double& { return c.trust_region.cg_damping; }));
    t.push_back(real_setting("cg_tol", [](TrainConfig& c) -> double& { return c.trust_region.cg_tol; }));
    t.push_back(
        real_setting("backtrack_coeff", [](TrainConfig& c) -> double& { return c.trust_region.backtrack_coeff; }));
    t.push_back(
        integer_setting("backtrack_iters", [](TrainConfig& c) -> int& { return c.trust_region.backtrack_iters; }));
    t.push_back(integer_setting("batch_size", [](TrainConfig& c) -> int& { return c.batch_size; }));
    t.push_back(integer_setting("epoch_min_timesteps", [](TrainConfig& c) -> int& { return c.epoch_min_timesteps; }));
    t.push_back(integer_setting("max_epochs", [](TrainConfig& c) -> int& { return c.max_epochs; }));
    t.push_back(real_setting("value_lr", [](TrainConfig& c) -> double& { return c.value_lr; }));
    t.push_back(integer_setting("value_epochs_per_update",
                                [](TrainConfig& c) -> int& { return c.value_epochs_per_update; }));
    t.push_back(integer_setting("seed", [](TrainConfig& c) -> std::uint64_t& { return c.seed; }));
    t.push_back(integer_setting("solved_window", [](TrainConfig& c) -> int& { return c.solved_window; }));
    t.push_back(real_setting("solved_threshold", [](TrainConfig& c) -> double& { return c.solved_threshold; }));
    t.push_back(integer_setting("buffer_capacity", [](TrainConfig& c) -> std::size_t& { return c.buffer_capacity; }));
    t.push_back(
        real_setting("buffer_clear_threshold", [](TrainConfig& c) -> double& { return c.buffer_clear_threshold; }));
    t.push_back(real_setting("gravity", [](TrainConfig& c) -> double& { return c.env.gravity; }));
    t.push_back(real_setting("cart_mass", [](TrainConfig& c) -> double& { return c.env.cart_mass; }));
    t.push_back(real_setting("pole_mass", [](TrainConfig& c) -> double& { return c.env.pole_mass; }));
    t.push_back(real_setting("pole_half_length", [](TrainConfig& c) -> double& { return c.env.pole_half_length; }));
    t.push_back(real_setting("force_magnitude", [](TrainConfig& c) -> double& { return c.env.force_magnitude; }));
    t.push_back(real_setting("step_dt", [](TrainConfig& c) -> double& { return c.env.step_dt; }));
    t.push_back(integer_setting("max_episode_steps", [](TrainConfig& c) -> int& { return c.env.max_episode_steps; }));
    t.push_back(real_setting("theta_threshold", [](TrainConfig& c) -> double& { return c.env.theta_threshold; }));
    t.push_back(real_setting("x_threshold", [](TrainConfig& c) -> double& { return c.env.x_threshold; }));
    return t;
  }();
  return table;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& s : detail::settings()) keys.push_back(s.key);
  return keys;
}

inline void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& s : detail::settings()) {
    if (s.key == key) {
      s.set(cfg, detail::trim(value));
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

inline std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& s : detail::settings()) entries.emplace_back(s.key, s.get(cfg));
  return entries;
}

/// Flat `key = value` lines; blank lines and lines starting with '#' are skipped.
inline std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, value] : config_entries(cfg)) out << key << " = " << value << '\n';
  return out.str();
}

inline void parse_config_text(TrainConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    apply_setting(cfg, detail::trim(stripped.substr(0, eq)), stripped.substr(eq + 1));
  }
}

inline void load_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  parse_config_text(cfg, text.str());
}

inline void write_config_file(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << serialize_config(cfg);
}

}  // namespace entrpo
