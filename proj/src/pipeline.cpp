#include "topopt/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "topopt/channel.hpp"
#include "topopt/rng.hpp"

namespace topopt {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

void RunConfig::apply_total_budget(double seconds) {
  total_seconds = seconds;
  if (dc_seconds < 0) dc_seconds = seconds * 3.0 / 8.0;
  if (ac_seconds < 0) ac_seconds = seconds;
}

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

const std::vector<std::string>& outcome_names() {
  static const std::vector<std::string> names = {
      "accepted",
      "nonconvergence",
      "overload_not_improved",
      "critical_count_increased",
      "eliminated_similar",
      "eliminated_dominated",
      "eliminated_below_threshold"};
  return names;
}

std::string outcome_of(const ValidationRecord& r) {
  return r.accepted ? "accepted" : to_string(r.reason);
}

}  // namespace

RunConfig run_config_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  RunConfig cfg;
  if (doc.contains("grid")) cfg.grid_path = doc.at("grid").get<std::string>();
  if (doc.contains("action_cache"))
    cfg.action_cache = doc.at("action_cache").get<std::string>();
  if (doc.contains("out_dir")) cfg.out_dir = doc.at("out_dir").get<std::string>();

  if (doc.contains("optimizer")) {
    const json& o = doc.at("optimizer");
    read_key(o, "n_a", cfg.qd.n_a);
    read_key(o, "n_d", cfg.qd.n_d);
    read_key(o, "batch_size", cfg.qd.batch_size);
    read_key(o, "iters_per_epoch", cfg.qd.iters_per_epoch);
    read_key(o, "cell_capacity", cfg.qd.cell_capacity);
    read_key(o, "mutation_mean", cfg.qd.mutation_mean);
    read_key(o, "p_crossover_parent1", cfg.qd.p_crossover_parent1);
    read_key(o, "d_max", cfg.qd.d_max);
    read_key(o, "s_max", cfg.qd.s_max);
    read_key(o, "r_max", cfg.qd.r_max);
    read_key(o, "seed", cfg.qd.seed);
    read_key(o, "max_evaluations", cfg.qd.max_evaluations);
    if (o.contains("p_action")) {
      auto v = o.at("p_action").get<std::vector<double>>();
      if (v.size() != 4) throw ConfigError("p_action needs 4 weights");
      std::copy(v.begin(), v.end(), cfg.qd.p_action.begin());
    }
    if (o.contains("p_disc")) {
      auto v = o.at("p_disc").get<std::vector<double>>();
      if (v.size() != 4) throw ConfigError("p_disc needs 4 weights");
      std::copy(v.begin(), v.end(), cfg.qd.p_disc.begin());
    }
  }
  if (doc.contains("dc")) {
    const json& d = doc.at("dc");
    read_key(d, "islanding_penalty_mw", cfg.dc.islanding_penalty_mw);
    read_key(d, "worst_k", cfg.dc.worst_k);
    read_key(d, "weight_c0", cfg.dc.weight_c0);
    read_key(d, "weight_c", cfg.dc.weight_c);
    read_key(d, "fitness_variant", cfg.dc.fitness_variant);
    read_key(d, "threads", cfg.dc.threads);
  }
  if (doc.contains("ac")) {
    const json& a = doc.at("ac");
    read_key(a, "tolerance_pu", cfg.ac.tolerance_pu);
    read_key(a, "max_iterations", cfg.ac.max_iterations);
    read_key(a, "worst_k_nonconverged", cfg.ac.worst_k_nonconverged);
    read_key(a, "nonconverged_fraction", cfg.ac.nonconverged_fraction);
    read_key(a, "similarity_distance", cfg.ac.similarity_distance);
    read_key(a, "dominance_fitness_frac", cfg.ac.dominance_fitness_frac);
    read_key(a, "improvement_threshold_frac", cfg.ac.improvement_threshold_frac);
  }
  if (doc.contains("enumeration")) {
    const json& e = doc.at("enumeration");
    read_key(e, "cap", cfg.enumeration.cap);
    read_key(e, "seed", cfg.enumeration.seed);
  }
  if (doc.contains("budgets")) {
    const json& b = doc.at("budgets");
    read_key(b, "dc_seconds", cfg.dc_seconds);
    read_key(b, "ac_seconds", cfg.ac_seconds);
    read_key(b, "total_seconds", cfg.total_seconds);
  }
  read_key(doc, "deterministic", cfg.deterministic);
  read_key(doc, "snapshot_queue", cfg.snapshot_queue);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return run_config_from_json_text(buf.str());
}

std::string run_config_to_json_text(const RunConfig& cfg) {
  json doc;
  doc["grid"] = cfg.grid_path.string();
  doc["action_cache"] = cfg.action_cache.string();
  doc["out_dir"] = cfg.out_dir.string();
  doc["optimizer"] = {
      {"n_a", cfg.qd.n_a},
      {"n_d", cfg.qd.n_d},
      {"batch_size", cfg.qd.batch_size},
      {"iters_per_epoch", cfg.qd.iters_per_epoch},
      {"cell_capacity", cfg.qd.cell_capacity},
      {"mutation_mean", cfg.qd.mutation_mean},
      {"p_action", cfg.qd.p_action},
      {"p_disc", cfg.qd.p_disc},
      {"p_crossover_parent1", cfg.qd.p_crossover_parent1},
      {"d_max", cfg.qd.d_max},
      {"s_max", cfg.qd.s_max},
      {"r_max", cfg.qd.r_max},
      {"seed", cfg.qd.seed},
      {"max_evaluations", cfg.qd.max_evaluations}};
  doc["dc"] = {{"islanding_penalty_mw", cfg.dc.islanding_penalty_mw},
               {"worst_k", cfg.dc.worst_k},
               {"weight_c0", cfg.dc.weight_c0},
               {"weight_c", cfg.dc.weight_c},
               {"fitness_variant", cfg.dc.fitness_variant},
               {"threads", cfg.dc.threads}};
  doc["ac"] = {{"tolerance_pu", cfg.ac.tolerance_pu},
               {"max_iterations", cfg.ac.max_iterations},
               {"worst_k_nonconverged", cfg.ac.worst_k_nonconverged},
               {"nonconverged_fraction", cfg.ac.nonconverged_fraction},
               {"similarity_distance", cfg.ac.similarity_distance},
               {"dominance_fitness_frac", cfg.ac.dominance_fitness_frac},
               {"improvement_threshold_frac", cfg.ac.improvement_threshold_frac}};
  doc["enumeration"] = {{"cap", cfg.enumeration.cap}, {"seed", cfg.enumeration.seed}};
  doc["budgets"] = {{"dc_seconds", cfg.dc_seconds},
                    {"ac_seconds", cfg.ac_seconds},
                    {"total_seconds", cfg.total_seconds}};
  doc["deterministic"] = cfg.deterministic;
  doc["snapshot_queue"] = cfg.snapshot_queue;
  return doc.dump(2);
}

RunReport aggregate_report(const std::vector<ValidationRecord>& records,
                           const std::vector<std::pair<std::int64_t, double>>& trace,
                           double pre_ac_lambda_o, double pre_dc_fitness, int s_max,
                           int d_max) {
  RunReport report;
  report.rows = s_max + 1;
  report.cols = d_max + 1;
  report.heatmap.assign(report.rows, std::vector<double>(report.cols, -1.0));
  report.accepted_counts.assign(report.rows, std::vector<int>(report.cols, 0));
  report.fitness_trace = trace;
  report.pre_ac_lambda_o = pre_ac_lambda_o;
  report.pre_dc_fitness = pre_dc_fitness;
  report.records_total = static_cast<int>(records.size());

  // the unchanged topology never enters validation; its overload anchors (0,0)
  report.heatmap[0][0] = pre_ac_lambda_o;

  std::map<std::string, int> counts;
  for (const std::string& name : outcome_names()) counts[name] = 0;
  for (const ValidationRecord& r : records) {
    ++counts[outcome_of(r)];
    if (!r.accepted) continue;
    ++report.accepted_total;
    int s = std::min(r.dc_score.lambda_s, s_max);
    int d = std::min(r.dc_score.lambda_d, d_max);
    ++report.accepted_counts[s][d];
    if (report.heatmap[s][d] < 0.0 || r.ac_lambda_o < report.heatmap[s][d])
      report.heatmap[s][d] = r.ac_lambda_o;
  }
  for (const std::string& name : outcome_names())
    report.outcome_percent[name] =
        records.empty() ? 0.0 : 100.0 * counts[name] / records.size();

  report.success = report.accepted_total > 0 || pre_dc_fitness == 0.0;
  return report;
}

namespace {

void emit_tables(const RunReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream out(out_dir / name);
    if (!out) throw IoError(std::string("cannot write report file '") + name + "'");
    return out;
  };

  {
    std::ofstream out = open("heatmap_overload.csv");
    out << "lambda_s\\lambda_d";
    for (int d = 0; d < report.cols; ++d) out << "," << d;
    out << "\n";
    for (int s = 0; s < report.rows; ++s) {
      out << s;
      for (int d = 0; d < report.cols; ++d) {
        if (report.heatmap[s][d] < 0.0)
          out << ",-";
        else
          out << "," << fmt_double(report.heatmap[s][d]);
      }
      out << "\n";
    }
  }
  {
    std::ofstream out = open("accepted_counts.csv");
    out << "lambda_s\\lambda_d";
    for (int d = 0; d < report.cols; ++d) out << "," << d;
    out << "\n";
    for (int s = 0; s < report.rows; ++s) {
      out << s;
      for (int d = 0; d < report.cols; ++d) out << "," << report.accepted_counts[s][d];
      out << "\n";
    }
  }
  {
    std::ofstream out = open("rejections.csv");
    out << "reason,percent\n";
    for (const std::string& name : outcome_names())
      out << name << "," << fmt_percent(report.outcome_percent.at(name)) << "\n";
  }
  {
    std::ofstream out = open("fitness_trace.csv");
    out << "evaluations,best_fitness\n";
    for (const auto& [evals, fitness] : report.fitness_trace)
      out << evals << "," << fmt_double(fitness) << "\n";
  }
}

}  // namespace

void emit_reports(const RunReport& report, const std::vector<ValidationRecord>& records,
                  const GridModel& grid, const ActionSet& actions,
                  const RunConfig& config, const std::filesystem::path& out_dir) {
  emit_tables(report, out_dir);
  {
    std::ofstream out(out_dir / "validation_log.jsonl");
    if (!out) throw IoError("cannot write validation_log.jsonl");
    for (const ValidationRecord& r : records)
      out << record_to_json(r, grid, actions) << "\n";
  }
  {
    json doc;
    doc["config"] = json::parse(run_config_to_json_text(config));
    doc["results"] = {{"evaluations", report.evaluations},
                      {"epochs", report.epochs},
                      {"records", report.records_total},
                      {"accepted", report.accepted_total},
                      {"pre_dc_fitness", report.pre_dc_fitness},
                      {"pre_ac_lambda_o", report.pre_ac_lambda_o},
                      {"s_max", report.rows - 1},
                      {"d_max", report.cols - 1},
                      {"success", report.success}};
    doc["timings"] = {{"dc_elapsed_seconds", report.dc_elapsed},
                      {"ac_elapsed_seconds", report.ac_elapsed},
                      {"total_elapsed_seconds", report.total_elapsed},
                      {"evaluations_per_second", report.evaluations_per_second},
                      {"snapshots_dropped", report.snapshots_dropped}};
    std::ofstream out(out_dir / "run.json");
    if (!out) throw IoError("cannot write run.json");
    out << doc.dump(2) << "\n";
  }
}

RunReport run_pipeline(const RunConfig& config) {
  const auto start = Clock::now();
  auto staged = [](const char* stage, auto&& fn) -> decltype(fn()) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw PipelineError(stage, e.what());
    }
  };

  GridModel grid = staged("import", [&] { return load_grid(config.grid_path); });

  ActionSet actions = staged("import", [&] {
    if (!config.action_cache.empty()) {
      if (auto cached = load_action_set(grid, config.action_cache))
        return std::move(*cached);
    }
    ActionSet built = build_action_set(grid, config.enumeration);
    if (!config.action_cache.empty())
      save_action_set(built, grid, config.action_cache);
    return built;
  });

  DcContext dc =
      staged("import", [&] { return DcContext(grid, actions, config.dc); });
  AcValidator validator = staged(
      "ac baseline", [&] { return AcValidator(grid, actions, dc, config.ac); });

  QdConfig qd = config.qd;
  if (config.dc_seconds >= 0.0)
    qd.max_seconds =
        qd.max_seconds < 0.0 ? config.dc_seconds : std::min(qd.max_seconds, config.dc_seconds);

  SnapshotChannel channel(config.deterministic ? 0 : config.snapshot_queue);
  std::atomic<bool> stop{false};

  OptimizerStats stats;
  std::exception_ptr dc_error;
  double dc_elapsed = 0.0;
  std::thread dc_thread([&] {
    const auto dc_start = Clock::now();
    try {
      OptimizerResult result = run_optimizer(
          dc, qd, [&](RepertoireSnapshot snap) { channel.push(std::move(snap)); },
          &stop);
      stats = std::move(result.stats);
    } catch (...) {
      dc_error = std::current_exception();
    }
    dc_elapsed = seconds_since(dc_start);
    channel.close();
  });

  const auto out_of_time = [&] {
    if (config.deterministic) return false;
    if (config.ac_seconds >= 0.0 && seconds_since(start) >= config.ac_seconds)
      return true;
    if (config.total_seconds >= 0.0 && seconds_since(start) >= config.total_seconds)
      return true;
    return false;
  };

  std::set<std::string> resolved;
  Rng refill_rng(derive_seed(config.qd.seed, 0xacac, 0));
  const auto ac_start = Clock::now();
  bool timed_out = false;

  while (!timed_out) {
    std::optional<RepertoireSnapshot> snap = channel.pop();
    if (!snap) break;

    std::vector<Candidate> candidates;
    std::set<std::string> in_snapshot;
    for (SnapshotEntry& entry : snap->entries) {
      if (entry.genome.is_empty()) continue;  // the baseline is not a candidate
      std::string key = entry.genome.canonical_key();
      if (resolved.count(key) || !in_snapshot.insert(key).second) continue;
      candidates.push_back(Candidate{std::move(entry.genome), std::move(entry.score)});
    }
    if (candidates.empty()) continue;

    EliminationOutcome outcome = validator.eliminate(candidates);
    for (int idx : outcome.queue) {
      if (out_of_time()) {
        timed_out = true;
        break;
      }
      validator.validate(candidates[idx]);
      resolved.insert(candidates[idx].genome.canonical_key());
    }

    std::vector<std::pair<int, RejectionReason>> pruned = outcome.pruned;
    if (!config.deterministic) {
      // idle validator: spend leftover time on randomly chosen pruned ones
      while (!timed_out && !pruned.empty() && !channel.has_pending()) {
        if (out_of_time()) {
          timed_out = true;
          break;
        }
        int pick = std::uniform_int_distribution<int>(
            0, static_cast<int>(pruned.size()) - 1)(refill_rng);
        validator.validate(candidates[pruned[pick].first]);
        resolved.insert(candidates[pruned[pick].first].genome.canonical_key());
        pruned.erase(pruned.begin() + pick);
      }
    }
    for (const auto& [idx, reason] : pruned) {
      validator.record_elimination(candidates[idx], reason);
      resolved.insert(candidates[idx].genome.canonical_key());
    }
  }
  if (timed_out) stop.store(true);
  dc_thread.join();
  if (dc_error) {
    try {
      std::rethrow_exception(dc_error);
    } catch (const std::exception& e) {
      throw PipelineError("dc optimizer", e.what());
    }
  }
  double ac_elapsed = seconds_since(ac_start);

  RunReport report = aggregate_report(
      validator.records(), stats.fitness_trace, validator.baseline_lambda_o(),
      dc.pre_optimization_score().fitness, config.qd.s_max, config.qd.d_max);
  report.evaluations = stats.evaluations;
  report.epochs = stats.epochs;
  report.dc_elapsed = dc_elapsed;
  report.ac_elapsed = ac_elapsed;
  report.total_elapsed = seconds_since(start);
  report.evaluations_per_second =
      dc_elapsed > 0.0 ? static_cast<double>(stats.evaluations) / dc_elapsed : 0.0;
  report.snapshots_dropped = channel.dropped();

  emit_reports(report, validator.records(), grid, actions, config, config.out_dir);
  return report;
}

RunReport reaggregate_from_logs(const std::filesystem::path& run_dir,
                                const std::filesystem::path& out_dir) {
  std::ifstream meta_in(run_dir / "run.json");
  if (!meta_in) throw IoError("missing run.json in '" + run_dir.string() + "'");
  json meta = json::parse(meta_in);
  const json& results = meta.at("results");

  std::vector<ValidationRecord> records;
  std::ifstream log_in(run_dir / "validation_log.jsonl");
  if (!log_in) throw IoError("missing validation_log.jsonl in '" + run_dir.string() + "'");
  std::string line;
  while (std::getline(log_in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ValidationRecord r;
    r.dc_score.lambda_d = j.at("lambda_d").get<int>();
    r.dc_score.lambda_s = j.at("lambda_s").get<int>();
    r.dc_score.lambda_r = j.at("lambda_r").get<int>();
    r.dc_score.fitness = j.at("dc_fitness").get<double>();
    r.accepted = j.at("verdict") == "accepted";
    std::string stage = j.at("stage").get<std::string>();
    r.stage = stage == "full_n1"
                  ? ValidationStage::FullN1
                  : (stage == "worst_k" ? ValidationStage::WorstK : ValidationStage::None);
    std::string reason = j.at("reason").get<std::string>();
    for (int code = 1; code <= 6; ++code)
      if (to_string(static_cast<RejectionReason>(code)) == reason)
        r.reason = static_cast<RejectionReason>(code);
    r.ac_lambda_o = j.at("ac_lambda_o").get<double>();
    records.push_back(std::move(r));
  }

  std::vector<std::pair<std::int64_t, double>> trace;
  std::ifstream trace_in(run_dir / "fitness_trace.csv");
  if (trace_in) {
    std::getline(trace_in, line);  // header
    while (std::getline(trace_in, line)) {
      auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      trace.emplace_back(std::stoll(line.substr(0, comma)),
                         std::stod(line.substr(comma + 1)));
    }
  }

  RunReport report = aggregate_report(records, trace,
                                      results.at("pre_ac_lambda_o").get<double>(),
                                      results.at("pre_dc_fitness").get<double>(),
                                      results.at("s_max").get<int>(),
                                      results.at("d_max").get<int>());
  report.evaluations = results.at("evaluations").get<std::int64_t>();
  report.epochs = results.at("epochs").get<int>();

  emit_tables(report, out_dir);
  return report;
}

}  // namespace topopt
