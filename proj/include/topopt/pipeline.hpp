#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "topopt/ac_validator.hpp"
#include "topopt/dc_engine.hpp"
#include "topopt/importer.hpp"
#include "topopt/qd_optimizer.hpp"

namespace topopt {

// Module failure annotated with the pipeline stage it surfaced in.
struct PipelineError : std::runtime_error {
  PipelineError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_name(stage) {}
  std::string stage_name;
};

struct RunConfig {
  std::filesystem::path grid_path;
  std::filesystem::path action_cache;  // empty: no cache file
  std::filesystem::path out_dir = "out";

  QdConfig qd;
  DcConfig dc;
  AcConfig ac;
  EnumerationConfig enumeration;

  // wall-clock stage budgets in seconds, < 0 means unlimited
  double dc_seconds = -1.0;
  double ac_seconds = -1.0;
  double total_seconds = -1.0;

  // deterministic mode: unbounded snapshot queue, the validator drains
  // everything; wall-clock mode: bounded queue with drop-oldest and random
  // refill when the validator idles
  bool deterministic = true;
  std::size_t snapshot_queue = 4;

  // splits a single total budget into the stage profile (DC 3/8, AC full)
  void apply_total_budget(double seconds);
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& config);

struct RunReport {
  int rows = 0;  // lambda_s values: 0..s_max
  int cols = 0;  // lambda_d values: 0..d_max
  // best accepted AC overload energy per (lambda_s, lambda_d); negative = empty
  std::vector<std::vector<double>> heatmap;
  std::vector<std::vector<int>> accepted_counts;
  // percentages over all consumed candidates, keyed by outcome name
  std::map<std::string, double> outcome_percent;
  std::vector<std::pair<std::int64_t, double>> fitness_trace;

  std::int64_t evaluations = 0;
  int epochs = 0;
  int records_total = 0;
  int accepted_total = 0;
  double pre_ac_lambda_o = 0.0;
  double pre_dc_fitness = 0.0;
  bool success = false;

  double dc_elapsed = 0.0;
  double ac_elapsed = 0.0;
  double total_elapsed = 0.0;
  double evaluations_per_second = 0.0;
  std::size_t snapshots_dropped = 0;
};

// Pure aggregation of validation records into the report tables.
RunReport aggregate_report(const std::vector<ValidationRecord>& records,
                           const std::vector<std::pair<std::int64_t, double>>& trace,
                           double pre_ac_lambda_o, double pre_dc_fitness, int s_max,
                           int d_max);

// import -> DC optimization -> AC validation, concurrently connected by the
// snapshot channel; writes all report files into config.out_dir.
RunReport run_pipeline(const RunConfig& config);

void emit_reports(const RunReport& report, const std::vector<ValidationRecord>& records,
                  const GridModel& grid, const ActionSet& actions,
                  const RunConfig& config, const std::filesystem::path& out_dir);

// Rebuilds the report files from a previous run's validation log.
RunReport reaggregate_from_logs(const std::filesystem::path& run_dir,
                                const std::filesystem::path& out_dir);

}  // namespace topopt
