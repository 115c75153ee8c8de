#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsvm/config.hpp"
#include "fedsvm/error.hpp"
#include "fedsvm/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::size_t> eval_stride;
};

fedsvm::RunConfig load(const std::string& path, const Overrides& o) {
  auto config = fedsvm::parse_config_file(path);
  if (o.seed) config.seeds = {*o.seed};
  if (o.output_dir) config.output_dir = *o.output_dir;
  if (o.eval_stride) config.eval_stride = *o.eval_stride;
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with TurboSVM-FL and baseline strategies"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--seed-override", o.seed, "Run a single seed instead of experiment.seeds");
  app.add_option("--output-dir", o.output_dir, "Replace experiment.output_dir");
  app.add_option("--eval-stride", o.eval_stride, "Evaluate every n-th round")
      ->check(CLI::PositiveNumber);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run one strategy over all seeds");
  run->add_option("config", run_config)->required();

  std::vector<std::string> compare_configs;
  auto* compare = app.add_subcommand("compare", "Run several strategies on one setup");
  compare->add_option("configs", compare_configs)->required();

  std::string sweep_config;
  std::vector<std::size_t> dims, clients;
  auto* sweep = app.add_subcommand("sweep", "Support-vector count over (d, C)");
  sweep->add_option("config", sweep_config)->required();
  sweep->add_option("--dims", dims, "Embedding sizes")->required()->delimiter(',');
  sweep->add_option("--clients", clients, "Clients per round")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  std::vector<fedsvm::RunConfig> configs;
  try {
    if (*run) configs.push_back(load(run_config, o));
    if (*compare) {
      for (const auto& path : compare_configs) configs.push_back(load(path, o));
      fedsvm::require_comparable(configs);
    }
    if (*sweep) configs.push_back(load(sweep_config, o));
  } catch (const fedsvm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const fedsvm::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (*run) {
      fedsvm::ExperimentResult result;
      const bool ok = fedsvm::run_and_write(configs.front(), &result);
      std::ifstream summary(configs.front().output_dir / "summary.txt");
      std::cout << summary.rdbuf();
      return ok ? kOk : kRuntimeError;
    }
    if (*compare) {
      const auto dir = configs.front().output_dir;
      const auto result = fedsvm::compare_strategies(configs, dir);
      std::cout << fedsvm::format_compare_table(result.rows,
                                                configs.front().target_accuracy);
      return result.ok ? kOk : kRuntimeError;
    }
    const auto& base = configs.front();
    bool ok = true;
    const auto rows = fedsvm::sv_sweep(base, dims, clients, &ok);
    std::filesystem::create_directories(base.output_dir);
    std::ofstream csv(base.output_dir / "sweep.csv", std::ios::binary);
    fedsvm::write_sweep_csv(csv, rows);
    std::ofstream seeds(base.output_dir / "sweep_seeds.csv", std::ios::binary);
    fedsvm::write_sweep_seeds_csv(seeds, rows);
    fedsvm::write_sweep_csv(std::cout, rows);
    return ok ? kOk : kRuntimeError;
  } catch (const fedsvm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
