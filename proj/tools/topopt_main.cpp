#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "topopt/importer.hpp"
#include "topopt/pipeline.hpp"

using namespace topopt;

namespace {

int cmd_import(const std::string& grid_path, const std::string& cache_path,
               std::uint64_t seed, std::int64_t cap) {
  GridModel grid = load_grid(grid_path);
  EnumerationConfig cfg;
  cfg.seed = seed;
  if (cap > 0) cfg.cap = cap;
  ActionSet actions = build_action_set(grid, cfg);
  save_action_set(actions, grid, cache_path);
  std::cout << "grid: " << grid.nodes.size() << " nodes, " << grid.branches.size()
            << " branches, " << grid.contingencies.size() << " contingencies\n"
            << "action set: " << actions.actions.size() << " reconfigurations across "
            << actions.station_ranges.size() << " stations, "
            << actions.disconnectables.size() << " disconnectable branches\n"
            << "cached to " << cache_path << "\n";
  return 0;
}

int cmd_optimize(RunConfig config) {
  RunReport report = run_pipeline(config);
  std::cout << "evaluated " << report.evaluations << " topologies in " << report.epochs
            << " epochs (" << static_cast<long long>(report.evaluations_per_second)
            << " evals/s)\n"
            << "validation records: " << report.records_total << ", accepted "
            << report.accepted_total << "\n"
            << "pre-optimization AC overload: " << report.pre_ac_lambda_o << " MW\n";
  double best = -1.0;
  for (const auto& row : report.heatmap)
    for (double v : row)
      if (v >= 0.0 && (best < 0.0 || v < best)) best = v;
  if (report.accepted_total > 0)
    std::cout << "best accepted AC overload: " << best << " MW\n";
  std::cout << "reports written to " << config.out_dir.string() << "\n";
  return report.success ? 0 : 1;
}

int cmd_report(const std::string& run_dir, const std::string& out_dir) {
  RunReport report = reaggregate_from_logs(run_dir, out_dir.empty() ? run_dir : out_dir);
  std::cout << "re-aggregated " << report.records_total << " records, accepted "
            << report.accepted_total << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transmission topology optimization engine"};
  app.require_subcommand(1);

  std::string grid_path, cache_path, config_path, out_dir, run_dir;
  std::uint64_t seed = 0;
  std::int64_t cap = 0, max_evaluations = 0;
  double budget_seconds = -1.0;
  bool wall_clock = false;

  CLI::App* import_cmd = app.add_subcommand("import", "build and cache the action set");
  import_cmd->add_option("--grid", grid_path, "grid JSON file")->required();
  import_cmd->add_option("--cache", cache_path, "action cache output file")->required();
  import_cmd->add_option("--seed", seed, "down-sampling seed");
  import_cmd->add_option("--cap", cap, "max stage-1 candidates per station");

  CLI::App* optimize_cmd = app.add_subcommand("optimize", "run the full pipeline");
  optimize_cmd->add_option("--grid", grid_path, "grid JSON file");
  optimize_cmd->add_option("--config", config_path, "run configuration JSON");
  auto* seed_opt = optimize_cmd->add_option("--seed", seed, "master seed");
  optimize_cmd->add_option("--budget-seconds", budget_seconds, "total wall-clock budget");
  optimize_cmd->add_option("--max-evaluations", max_evaluations, "DC evaluation budget");
  optimize_cmd->add_option("--out", out_dir, "report output directory");
  optimize_cmd->add_option("--cache", cache_path, "action cache file");
  optimize_cmd->add_flag("--wall-clock", wall_clock,
                         "bounded snapshot queue and time-driven validation");

  CLI::App* report_cmd = app.add_subcommand("report", "re-aggregate reports from logs");
  report_cmd->add_option("--run", run_dir, "directory holding a previous run")->required();
  report_cmd->add_option("--out", out_dir, "output directory (default: the run dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(import_cmd))
      return cmd_import(grid_path, cache_path, seed, cap);

    if (app.got_subcommand(optimize_cmd)) {
      RunConfig config;
      if (!config_path.empty()) config = load_run_config(config_path);
      if (!grid_path.empty()) config.grid_path = grid_path;
      if (config.grid_path.empty())
        throw ConfigError("no grid file given (--grid or config)");
      if (!cache_path.empty()) config.action_cache = cache_path;
      if (seed_opt->count() > 0) config.qd.seed = seed;
      if (max_evaluations > 0) config.qd.max_evaluations = max_evaluations;
      if (budget_seconds >= 0.0) config.apply_total_budget(budget_seconds);
      if (wall_clock) config.deterministic = false;
      if (!out_dir.empty()) config.out_dir = out_dir;
      if (const char* env = std::getenv("TOPOPT_OUT_DIR")) config.out_dir = env;
      return cmd_optimize(std::move(config));
    }

    if (app.got_subcommand(report_cmd)) return cmd_report(run_dir, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
