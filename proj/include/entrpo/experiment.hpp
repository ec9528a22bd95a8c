#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "entrpo/config.hpp"
#include "entrpo/tiny_nn.hpp"
#include "entrpo/trainer.hpp"

namespace entrpo {

namespace fs = std::filesystem;

inline constexpr const char* kMetricsHeader =
    "epoch,episodes,mean_return,min_return,max_return,policy_kl,entropy,surrogate_before,surrogate_after,"
    "value_loss,solved";

inline constexpr const char* kSummaryHeader =
    "algo,gamma,runs,solved,unsolved,solve_rate,median_epochs_to_solve,min_epochs_to_solve,max_epochs_to_solve";

/// One metrics.csv row. value_loss is left empty when the fit was skipped.
inline std::string metrics_row(const EpochRecord& r) {
  std::ostringstream out;
  out << r.epoch << ',' << r.episodes << ',' << format_real(r.mean_return) << ',' << format_real(r.min_return) << ','
      << format_real(r.max_return) << ',' << format_real(r.diag.mean_kl) << ',' << format_real(r.diag.mean_entropy)
      << ',' << format_real(r.diag.surrogate_before) << ',' << format_real(r.diag.surrogate_after) << ','
      << (r.value_fit_skipped ? std::string() : format_real(r.value_loss)) << ',' << (r.solved ? 1 : 0);
  return out.str();
}

struct MetricsRow {
  int epoch = 0;
  int episodes = 0;
  double mean_return = 0.0, min_return = 0.0, max_return = 0.0;
  double policy_kl = 0.0, entropy = 0.0, surrogate_before = 0.0, surrogate_after = 0.0;
  std::optional<double> value_loss;
  bool solved = false;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw std::runtime_error("unexpected metrics header in " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 11) throw std::runtime_error("malformed metrics row in " + path.string());
    MetricsRow r;
    r.epoch = std::stoi(f[0]);
    r.episodes = std::stoi(f[1]);
    r.mean_return = std::stod(f[2]);
    r.min_return = std::stod(f[3]);
    r.max_return = std::stod(f[4]);
    r.policy_kl = std::stod(f[5]);
    r.entropy = std::stod(f[6]);
    r.surrogate_before = std::stod(f[7]);
    r.surrogate_after = std::stod(f[8]);
    if (!f[9].empty()) r.value_loss = std::stod(f[9]);
    r.solved = f[10] == "1";
    rows.push_back(r);
  }
  return rows;
}

/// Sweep directory name, e.g. entrpo_gamma085_seed3 (gamma to two decimals).
inline std::string run_dir_name(Algo algo, double gamma, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_gamma%03d_seed%llu", to_string(algo),
                static_cast<int>(std::lround(gamma * 100.0)), static_cast<unsigned long long>(seed));
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Resolves a relative output path under $ENTRPO_OUTPUT_ROOT when it is set.
inline fs::path resolve_output_path(const fs::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("ENTRPO_OUTPUT_ROOT"); root && *root) return fs::path(root) / path;
  return path;
}

struct RunOutcome {
  std::string run_id;
  fs::path output_path;
  Algo algo = Algo::entrpo;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  int epochs = 0;
  std::optional<int> solved_epoch;
  bool halted = false;
  std::string message;
};

/// Trains once and writes config.txt, metrics.csv and manifest.txt into `out_dir`.
inline RunOutcome run_training(const TrainConfig& cfg, const fs::path& out_dir, bool save_checkpoints = false) {
  cfg.validate();
  fs::create_directories(out_dir);
  RunOutcome outcome;
  outcome.run_id = out_dir.filename().string();
  outcome.output_path = out_dir;
  outcome.algo = cfg.algo;
  outcome.gamma = cfg.gamma;
  outcome.seed = cfg.seed;
  const std::string started = utc_timestamp();

  write_config_file(cfg, (out_dir / "config.txt").string());
  std::ofstream metrics(out_dir / "metrics.csv");
  if (!metrics) throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
  metrics << kMetricsHeader << '\n';
  const TrainResult result = train(cfg, [&](const EpochRecord& r) { metrics << metrics_row(r) << '\n' << std::flush; });

  outcome.epochs = static_cast<int>(result.records.size());
  outcome.solved_epoch = result.solved_epoch;
  outcome.halted = result.halted;
  outcome.message = result.message;
  if (save_checkpoints) {
    save_checkpoint((out_dir / "policy.ckpt").string(), policy_architecture(), result.policy_params);
    save_checkpoint((out_dir / "value.ckpt").string(), value_architecture(), result.value_params);
  }

  std::ofstream manifest(out_dir / "manifest.txt");
  manifest << "run_id = " << outcome.run_id << '\n'
           << "output_path = " << fs::absolute(out_dir).string() << '\n'
           << "started = " << started << '\n'
           << "finished = " << utc_timestamp() << '\n'
           << "epochs = " << outcome.epochs << '\n'
           << "solved_epoch = " << (outcome.solved_epoch ? std::to_string(*outcome.solved_epoch) : "") << '\n'
           << "status = " << (outcome.halted ? "halted: " + outcome.message : "completed") << '\n';
  return outcome;
}

struct SummaryRow {
  Algo algo = Algo::entrpo;
  double gamma = 0.0;
  int runs = 0;
  int solved = 0;
  std::optional<double> median_epochs;  // unsolved runs count as +infinity
  std::optional<int> min_epochs;
  std::optional<int> max_epochs;

  int unsolved() const { return runs - solved; }
  double solve_rate() const { return runs ? static_cast<double>(solved) / runs : 0.0; }
};

inline std::optional<double> median_epochs_to_solve(std::vector<std::optional<int>> epochs) {
  if (epochs.empty()) return std::nullopt;
  std::vector<double> values;
  for (const auto& e : epochs) values.push_back(e ? static_cast<double>(*e) : std::numeric_limits<double>::infinity());
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  if (!std::isfinite(median)) return std::nullopt;
  return median;
}

inline std::vector<SummaryRow> summarize(const std::vector<RunOutcome>& runs, const std::vector<Algo>& algos,
                                         const std::vector<double>& gammas) {
  std::vector<SummaryRow> rows;
  for (Algo algo : algos) {
    for (double gamma : gammas) {
      SummaryRow row;
      row.algo = algo;
      row.gamma = gamma;
      std::vector<std::optional<int>> epochs;
      for (const auto& run : runs) {
        if (run.algo != algo || run.gamma != gamma) continue;
        ++row.runs;
        epochs.push_back(run.solved_epoch);
        if (run.solved_epoch) {
          ++row.solved;
          row.min_epochs = row.min_epochs ? std::min(*row.min_epochs, *run.solved_epoch) : *run.solved_epoch;
          row.max_epochs = row.max_epochs ? std::max(*row.max_epochs, *run.solved_epoch) : *run.solved_epoch;
        }
      }
      row.median_epochs = median_epochs_to_solve(epochs);
      rows.push_back(row);
    }
  }
  return rows;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << kSummaryHeader << '\n';
  const auto opt = [](const auto& v) {
    if (!v) return std::string();
    std::ostringstream s;
    s << *v;
    return s.str();
  };
  for (const auto& r : rows) {
    out << to_string(r.algo) << ',' << format_real(r.gamma) << ',' << r.runs << ',' << r.solved << ','
        << r.unsolved() << ',' << format_real(r.solve_rate()) << ',' << opt(r.median_epochs) << ','
        << opt(r.min_epochs) << ',' << opt(r.max_epochs) << '\n';
  }
  return out.str();
}

struct SweepSpec {
  TrainConfig base;
  std::vector<Algo> algos{Algo::trpo, Algo::entrpo};
  std::vector<double> gammas{0.8, 0.85, 0.9};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int jobs = 1;
};

struct SweepResult {
  std::vector<RunOutcome> runs;
  std::vector<SummaryRow> summary;
};

/// Every (algo, gamma, seed) combination in its own run directory, then
/// summary.csv at the sweep root once all runs are done.
inline SweepResult run_sweep(const SweepSpec& spec, const fs::path& out_root,
                             const std::function<void(const RunOutcome&)>& on_run = {}) {
  std::vector<TrainConfig> configs;
  for (Algo algo : spec.algos)
    for (double gamma : spec.gammas)
      for (std::uint64_t seed : spec.seeds) {
        TrainConfig cfg = spec.base;
        cfg.algo = algo;
        cfg.gamma = gamma;
        cfg.seed = seed;
        cfg.validate();
        configs.push_back(cfg);
      }
  fs::create_directories(out_root);

  SweepResult result;
  result.runs.resize(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  std::exception_ptr failure;
  const auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        const auto& cfg = configs[i];
        result.runs[i] = run_training(cfg, out_root / run_dir_name(cfg.algo, cfg.gamma, cfg.seed));
        std::lock_guard lock(report_mutex);
        if (on_run) on_run(result.runs[i]);
      } catch (...) {
        std::lock_guard lock(report_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(spec.jobs, static_cast<int>(configs.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  result.summary = summarize(result.runs, spec.algos, spec.gammas);
  std::ofstream summary(out_root / "summary.csv");
  summary << summary_csv(result.summary);
  return result;
}

}  // namespace entrpo
