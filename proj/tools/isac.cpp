// Experiment runner for the delay-Doppler sensing + IRS beamforming library.
//
// Usage:
//   isac <kind> [--config file.json] [--trials K] [--seed S] [--out results.csv]
//               [--plot plot.py]
//
// Kinds: estimate | prob-sweep | mse-sweep | beamform | rate-sweep | convergence
// Exit codes: 0 success, 2 configuration error, 3 infeasible optimization.
// ISAC_THREADS caps the trial pool (default: hardware concurrency).

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "isac/isac.hpp"

namespace {

int thread_cap_from_env() {
  const char* v = std::getenv("ISAC_THREADS");
  if (!v) return 0;
  const int n = std::atoi(v);
  return n > 0 ? n : 1;
}

void print_table(const isac::ResultTable& t, std::size_t head = 12) {
  for (const auto& c : t.columns) std::cout << c << '\t';
  std::cout << '\n';
  const std::size_t show = std::min(head, t.rows.size());
  for (std::size_t i = 0; i < show; ++i) {
    for (double v : t.rows[i]) std::cout << v << '\t';
    std::cout << '\n';
  }
  if (t.rows.size() > show)
    std::cout << "... (" << t.rows.size() << " rows total)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IRS-assisted OTFS sensing & beamforming simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path, plot_path;
  int trials_override = -1;
  long long seed_override = -1;

  const char* kinds[] = {"estimate", "prob-sweep", "mse-sweep",
                         "beamform", "rate-sweep", "convergence"};
  for (const char* k : kinds) {
    auto* sub = app.add_subcommand(k);
    sub->add_option("--config", config_path, "flat JSON experiment config");
    sub->add_option("--trials", trials_override, "override trial count");
    sub->add_option("--seed", seed_override, "override master seed");
    sub->add_option("--out", out_path, "CSV output path");
    sub->add_option("--plot", plot_path, "emit a matplotlib script (needs --out)");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    isac::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = isac::load_config(config_path);
    cfg.kind = app.get_subcommands().front()->get_name();
    if (trials_override >= 0) cfg.trials = trials_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.validate();
    if (!plot_path.empty() && out_path.empty())
      throw isac::ConfigError("--plot requires --out (the script reads the CSV)");

    const isac::ResultTable table = isac::run_experiment(cfg, thread_cap_from_env());

    if (!out_path.empty()) {
      isac::emit_csv(table, out_path);
      std::cout << "wrote " << out_path << " (" << table.rows.size() << " rows, config "
                << table.config_hash << ")\n";
    } else {
      print_table(table);
    }
    if (!plot_path.empty()) {
      isac::emit_plot_script(table, plot_path, out_path);
      std::cout << "wrote " << plot_path << '\n';
    }
    return 0;
  } catch (const isac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const isac::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
