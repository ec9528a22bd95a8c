// Command-line driver: single training runs, TRPO/EnTRPO sweeps, and the
// tabular verification of the policy-improvement identities and bounds.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "entrpo/config.hpp"
#include "entrpo/experiment.hpp"
#include "entrpo/verification.hpp"

namespace {

using namespace entrpo;

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// One string option per config key; only keys given on the command line are
// applied, after the optional config file, so flags override the file.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app, const std::vector<std::string>& excluded = {}) {
    app.add_option("--config", config_file, "flat key = value config file; flags override it")
        ->check(CLI::ExistingFile);
    for (const auto& key : config_keys()) {
      if (std::find(excluded.begin(), excluded.end(), key) != excluded.end()) continue;
      options[key] = app.add_option(flag_name(key), values[key], "config key '" + key + "'");
    }
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_file.empty()) load_config_file(cfg, config_file);
    for (const auto& [key, option] : options)
      if (option->count() > 0) apply_setting(cfg, key, values.at(key));
    return cfg;
  }
};

std::vector<double> parse_gamma_list(const std::string& text) {
  std::vector<double> gammas;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    TrainConfig probe;
    apply_setting(probe, "gamma", item);
    gammas.push_back(probe.gamma);
  }
  if (gammas.empty()) throw std::invalid_argument("--gammas: empty list");
  return gammas;
}

std::vector<Algo> parse_algo_list(const std::string& text) {
  std::vector<Algo> algos;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) algos.push_back(parse_algo(item));
  if (algos.empty()) throw std::invalid_argument("--algos: empty list");
  return algos;
}

int usage_error(const CLI::App& sub, const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n\n" << sub.help();
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TRPO / EnTRPO cart-pole laboratory"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "run one training job and write metrics.csv + config.txt");
  ConfigFlags train_flags;
  train_flags.attach(*train_cmd);
  std::string train_out;
  bool save_checkpoints = false;
  train_cmd->add_option("--out", train_out, "run directory (default runs/<algo>_gammaXXX_seedY)");
  train_cmd->add_flag("--save-checkpoints", save_checkpoints, "write policy.ckpt and value.ckpt at the end");

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "sweep {trpo, entrpo} x gammas x seeds");
  ConfigFlags compare_flags;
  compare_flags.attach(*compare_cmd, {"algo", "gamma", "seed"});
  std::string gammas_text = "0.8,0.85,0.9";
  std::string algos_text = "trpo,entrpo";
  int seed_count = 5;
  std::uint64_t seed_base = 0;
  int jobs = 1;
  std::string compare_out = "runs/compare";
  compare_cmd->add_option("--gammas", gammas_text, "comma-separated discount factors")->capture_default_str();
  compare_cmd->add_option("--algos", algos_text, "comma-separated algorithms")->capture_default_str();
  compare_cmd->add_option("--seeds", seed_count, "number of seeds per configuration")->capture_default_str();
  compare_cmd->add_option("--seed-base", seed_base, "first seed")->capture_default_str();
  compare_cmd->add_option("--jobs", jobs, "concurrent runs")->capture_default_str();
  compare_cmd->add_option("--out", compare_out, "sweep root directory")->capture_default_str();

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "check the exact tabular identities on random MDPs");
  tabular::VerificationOptions verify_opts;
  verify_cmd->add_option("--instances", verify_opts.instances, "random MDP instances")->capture_default_str();
  verify_cmd->add_option("--seed", verify_opts.seed, "generator seed")->capture_default_str();
  verify_cmd->add_option("--pairs", verify_opts.policy_pairs, "random policy pairs per instance")
      ->capture_default_str();
  verify_cmd->add_option("--iteration-instances", verify_opts.iteration_instances,
                         "instances used for the policy-iteration check")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (*train_cmd) {
    TrainConfig cfg;
    try {
      cfg = train_flags.resolve();
      cfg.validate();
    } catch (const std::exception& e) {
      return usage_error(*train_cmd, e);
    }
    const fs::path out =
        resolve_output_path(train_out.empty() ? fs::path("runs") / run_dir_name(cfg.algo, cfg.gamma, cfg.seed)
                                              : fs::path(train_out));
    std::cout << serialize_config(cfg);
    const RunOutcome run = run_training(cfg, out, save_checkpoints);
    std::cout << "run " << run.run_id << ": " << run.epochs << " epochs, "
              << (run.solved_epoch ? "solved at epoch " + std::to_string(*run.solved_epoch) : "not solved")
              << " -> " << (out / "metrics.csv").string() << '\n';
    if (run.halted) {
      std::cerr << run.message << '\n';
      return 1;
    }
    return 0;
  }

  if (*compare_cmd) {
    SweepSpec spec;
    try {
      spec.base = compare_flags.resolve();
      spec.gammas = parse_gamma_list(gammas_text);
      spec.algos = parse_algo_list(algos_text);
      if (seed_count < 1) throw std::invalid_argument("--seeds must be >= 1");
      if (jobs < 1) throw std::invalid_argument("--jobs must be >= 1");
      spec.seeds.clear();
      for (int i = 0; i < seed_count; ++i) spec.seeds.push_back(seed_base + static_cast<std::uint64_t>(i));
      spec.jobs = jobs;
      for (double g : spec.gammas) {
        TrainConfig probe = spec.base;
        probe.gamma = g;
        probe.validate();
      }
    } catch (const std::exception& e) {
      return usage_error(*compare_cmd, e);
    }
    const fs::path root = resolve_output_path(compare_out);
    const SweepResult sweep = run_sweep(spec, root, [](const RunOutcome& run) {
      std::cout << run.run_id << ": " << run.epochs << " epochs, "
                << (run.solved_epoch ? "solved at " + std::to_string(*run.solved_epoch) : "unsolved") << std::endl;
    });
    std::cout << '\n' << summary_csv(sweep.summary);
    std::cout << "summary written to " << (root / "summary.csv").string() << '\n';
    return 0;
  }

  if (*verify_cmd) {
    if (verify_opts.instances < 1 || verify_opts.policy_pairs < 1 || verify_opts.iteration_instances < 0) {
      std::cerr << "error: --instances and --pairs must be >= 1\n\n" << verify_cmd->help();
      return 2;
    }
    const tabular::VerificationReport report = tabular::run_verification(verify_opts);
    for (const auto* check : report.checks()) {
      std::printf("%-28s %s  cases=%zu failures=%zu worst_%s=%.6e (tolerance %s %.0e)\n", check->name.c_str(),
                  check->passed() ? "PASS" : "FAIL", check->cases, check->failures,
                  check->slack ? "slack" : "residual", check->worst, check->slack ? ">=" : "<=", check->tolerance);
    }
    std::printf("info: bound with squared max-KL penalty violated in %zu of %zu cases\n",
                report.kl_squared_violations, report.bound_cases);
    std::printf("info: bound with entropy-coefficient penalty violated in %zu of %zu cases\n",
                report.entropy_coef_reading_violations, report.bound_cases);
    std::printf("%s\n", report.passed() ? "all checks passed" : "some checks FAILED");
    return report.passed() ? 0 : 1;
  }
  return 0;
}
