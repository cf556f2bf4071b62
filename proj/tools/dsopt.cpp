#include "dsopt/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <optional>
#include <string>

namespace {

int run_command(const std::string& path, const std::optional<std::uint64_t>& seed, const std::optional<long>& steps,
                const std::optional<int>& reps, const std::optional<std::string>& policy,
                const std::optional<double>& epsilon, const std::optional<std::string>& out) {
  dsopt::ExperimentConfig cfg = dsopt::load_config(path);
  if (seed) cfg.seed = *seed;
  if (steps) cfg.steps = *steps;
  if (reps) cfg.reps = *reps;
  if (policy) cfg.policy.mode = dsopt::parse_policy_mode(*policy);
  if (epsilon) cfg.policy.epsilon = *epsilon;
  if (out) cfg.out_dir = *out;
  dsopt::finalize(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const dsopt::ExperimentResult r = dsopt::run_experiment(cfg);
  dsopt::write_outputs(r, cfg.out_dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << dsopt::summary_json(r.summary).dump(2) << "\n";
  if (cfg.log_gaps)
    std::cout << "epsilon check: max ratio " << r.epsilon.max_ratio << ", " << r.epsilon.violations
              << " violations in " << r.epsilon.checked << " records\n";
  std::cout << "wrote " << cfg.out_dir << " in " << secs << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-triggered distributed stochastic gradient simulator"};
  app.require_subcommand(1);

  std::string run_config;
  std::optional<std::uint64_t> seed;
  std::optional<long> steps;
  std::optional<int> reps;
  std::optional<std::string> policy;
  std::optional<double> epsilon;
  std::optional<std::string> out;
  auto* run = app.add_subcommand("run", "Run replications and write trace.csv and summary.json");
  run->add_option("--config", run_config, "JSON config file")->required();
  run->add_option("--seed", seed, "Master seed");
  run->add_option("--steps", steps, "Ticks per replication");
  run->add_option("--reps", reps, "Number of replications");
  run->add_option("--policy", policy, "Communication policy")
      ->check(CLI::IsMember({"full", "linear", "everytime", "never"}));
  run->add_option("--epsilon", epsilon, "Gradient accuracy target");
  run->add_option("--out", out, "Output directory");

  std::string validate_config;
  auto* val = app.add_subcommand("validate", "Check step-size and network conditions without simulating");
  val->add_option("--config", validate_config, "JSON config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return run_command(run_config, seed, steps, reps, policy, epsilon, out);
    const dsopt::ValidationReport rep = dsopt::validate_experiment(dsopt::load_config(validate_config));
    std::cout << dsopt::format_report(rep);
    return rep.ok() ? 0 : 1;
  } catch (const dsopt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const dsopt::InvariantError& e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return 2;
  }
}
