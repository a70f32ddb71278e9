#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "helpers.hpp"
#include "topopt/channel.hpp"
#include "topopt/pipeline.hpp"

using namespace topopt;
using namespace topopt::testing;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("topopt_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RepertoireSnapshot tagged(int epoch, bool final = false) {
  RepertoireSnapshot s;
  s.epoch = epoch;
  s.final = final;
  return s;
}

void write_grid(const GridModel& grid, const std::filesystem::path& path) {
  save_grid(grid, path);
}

}  // namespace

TEST_CASE("snapshot channel") {
  SUBCASE("bounded channel drops the oldest non-final snapshot") {
    SnapshotChannel ch(2);
    ch.push(tagged(1));
    ch.push(tagged(2));
    ch.push(tagged(3));
    CHECK(ch.dropped() == 1);
    auto a = ch.try_pop();
    auto b = ch.try_pop();
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(a->epoch == 2);
    CHECK(b->epoch == 3);
  }

  SUBCASE("the final snapshot survives overflow") {
    SnapshotChannel ch(2);
    ch.push(tagged(1));
    ch.push(tagged(2, true));
    ch.push(tagged(3));
    std::vector<int> epochs;
    while (auto s = ch.try_pop()) epochs.push_back(s->epoch);
    CHECK(std::find(epochs.begin(), epochs.end(), 2) != epochs.end());
  }

  SUBCASE("pop blocks until close") {
    SnapshotChannel ch(0);
    std::vector<int> seen;
    std::thread consumer([&] {
      while (auto s = ch.pop()) seen.push_back(s->epoch);
    });
    for (int i = 1; i <= 5; ++i) ch.push(tagged(i, i == 5));
    ch.close();
    consumer.join();
    CHECK(seen == std::vector<int>{1, 2, 3, 4, 5});
  }
}

TEST_CASE("overload-free grid reports success with an empty heatmap") {
  GridModel grid = triangle_grid(200.0, 200.0, 200.0);
  auto dir = temp_dir("clean");
  auto grid_path = dir / "grid.json";
  write_grid(grid, grid_path);

  RunConfig config;
  config.grid_path = grid_path;
  config.out_dir = dir / "out";
  config.qd.seed = 3;
  config.qd.batch_size = 8;
  config.qd.iters_per_epoch = 5;
  config.qd.max_evaluations = 200;

  RunReport report = run_pipeline(config);
  CHECK(report.success);
  CHECK(report.pre_dc_fitness == 0.0);
  CHECK(report.pre_ac_lambda_o == doctest::Approx(0.0));
  CHECK(report.heatmap[0][0] == doctest::Approx(0.0));
  for (int s = 0; s < report.rows; ++s)
    for (int d = 0; d < report.cols; ++d)
      if (s != 0 || d != 0) CHECK(report.heatmap[s][d] < 0.0);  // all "-"

  CHECK(std::filesystem::exists(config.out_dir / "heatmap_overload.csv"));
  std::string heatmap = slurp(config.out_dir / "heatmap_overload.csv");
  CHECK(heatmap.find(",-") != std::string::npos);
}

TEST_CASE("pipeline finds and accepts the clearing action end to end") {
  GridModel grid = mini_congestion_grid();
  auto dir = temp_dir("mini");
  auto grid_path = dir / "grid.json";
  write_grid(grid, grid_path);

  RunConfig config;
  config.grid_path = grid_path;
  config.out_dir = dir / "out";
  config.action_cache = dir / "actions.json";
  config.qd.seed = 5;
  config.qd.batch_size = 16;
  config.qd.iters_per_epoch = 20;
  config.qd.max_evaluations = 3000;

  RunReport report = run_pipeline(config);
  CHECK(report.success);
  CHECK(report.accepted_total >= 1);
  REQUIRE(report.pre_ac_lambda_o > 0.0);

  double best = -1.0;
  for (const auto& row : report.heatmap)
    for (double v : row)
      if (v >= 0.0 && (best < 0.0 || v < best)) best = v;
  CHECK(best < report.pre_ac_lambda_o);

  // outcome percentages account for every record
  double sum = 0.0;
  for (const auto& [name, pct] : report.outcome_percent) sum += pct;
  CHECK(sum == doctest::Approx(100.0).epsilon(1e-9));

  // counts table sums to the accepted total
  int count_sum = 0;
  for (const auto& row : report.accepted_counts)
    for (int c : row) count_sum += c;
  CHECK(count_sum == report.accepted_total);

  // every consumed candidate has exactly one record
  std::set<std::string> keys;
  std::ifstream log(config.out_dir / "validation_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    CHECK(keys.insert(j["actions"].dump() + "|" + j["disconnections"].dump()).second);
    ++lines;
  }
  CHECK(lines == report.records_total);

  // fitness trace is non-decreasing
  for (std::size_t i = 1; i < report.fitness_trace.size(); ++i)
    CHECK(report.fitness_trace[i].second >= report.fitness_trace[i - 1].second);

  SUBCASE("cache reuse keeps results identical") {
    RunConfig again = config;
    again.out_dir = dir / "out_cached";
    RunReport second = run_pipeline(again);  // loads the action cache this time
    CHECK(second.accepted_total == report.accepted_total);
    CHECK(slurp(again.out_dir / "heatmap_overload.csv") ==
          slurp(config.out_dir / "heatmap_overload.csv"));
  }

  SUBCASE("identical seeds give byte-identical reports") {
    RunConfig twin = config;
    twin.out_dir = dir / "out_twin";
    run_pipeline(twin);
    for (const char* name : {"heatmap_overload.csv", "accepted_counts.csv",
                             "rejections.csv", "fitness_trace.csv",
                             "validation_log.jsonl"}) {
      CHECK(slurp(config.out_dir / name) == slurp(twin.out_dir / name));
    }
  }

  SUBCASE("report re-aggregation reproduces the tables from the log alone") {
    auto out2 = dir / "reagg";
    RunReport re = reaggregate_from_logs(config.out_dir, out2);
    CHECK(re.accepted_total == report.accepted_total);
    for (const char* name : {"heatmap_overload.csv", "accepted_counts.csv",
                             "rejections.csv", "fitness_trace.csv"}) {
      CHECK(slurp(out2 / name) == slurp(config.out_dir / name));
    }
  }
}

TEST_CASE("wall-clock mode stops within its budget") {
  GridModel grid = mini_congestion_grid();
  auto dir = temp_dir("wall");
  auto grid_path = dir / "grid.json";
  write_grid(grid, grid_path);

  RunConfig config;
  config.grid_path = grid_path;
  config.out_dir = dir / "out";
  config.qd.seed = 9;
  config.qd.batch_size = 16;
  config.qd.iters_per_epoch = 50;
  config.deterministic = false;
  config.apply_total_budget(2.0);

  auto start = std::chrono::steady_clock::now();
  RunReport report = run_pipeline(config);
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                       .count();
  CHECK(elapsed < 2.0 * 1.1 + 1.0);  // budget plus grace
  CHECK(report.dc_elapsed <= config.dc_seconds * 1.1 + 0.5);
  CHECK(report.evaluations > 0);
  CHECK(std::filesystem::exists(config.out_dir / "run.json"));
}

TEST_CASE("command line drives import, optimize and report") {
  auto dir = temp_dir("cli");
  auto grid_path = dir / "grid.json";
  write_grid(mini_congestion_grid(), grid_path);
  const std::string cli = TOPOPT_CLI_PATH;

  auto run = [&](const std::string& args) {
    std::string cmd = cli + " " + args + " > " + (dir / "cli.log").string() + " 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };

  CHECK(run("import --grid " + grid_path.string() + " --cache " +
            (dir / "actions.json").string()) == 0);
  CHECK(std::filesystem::exists(dir / "actions.json"));

  int code = run("optimize --grid " + grid_path.string() + " --cache " +
                 (dir / "actions.json").string() + " --seed 4 --max-evaluations 2000" +
                 " --out " + (dir / "out").string());
  CHECK(code == 0);  // the fixture is solvable, so something is accepted
  CHECK(std::filesystem::exists(dir / "out" / "run.json"));
  CHECK(std::filesystem::exists(dir / "out" / "validation_log.jsonl"));

  CHECK(run("report --run " + (dir / "out").string() + " --out " +
            (dir / "reagg").string()) == 0);
  CHECK(slurp(dir / "reagg" / "heatmap_overload.csv") ==
        slurp(dir / "out" / "heatmap_overload.csv"));

  // environment variable overrides the report directory
  auto env_out = dir / "env_out";
  std::string cmd = "TOPOPT_OUT_DIR=" + env_out.string() + " " + cli +
                    " optimize --grid " + grid_path.string() +
                    " --seed 4 --max-evaluations 500 --out " + (dir / "ignored").string() +
                    " > /dev/null 2>&1";
  int env_status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(env_status) == 0);
  CHECK(std::filesystem::exists(env_out / "run.json"));
  CHECK_FALSE(std::filesystem::exists(dir / "ignored"));
}

TEST_CASE("pipeline errors carry their stage") {
  RunConfig config;
  config.grid_path = "/nonexistent/grid.json";
  try {
    run_pipeline(config);
    FAIL("expected a pipeline error");
  } catch (const PipelineError& e) {
    CHECK(e.stage_name == "import");
    CHECK(std::string(e.what()).find("import:") == 0);
  }
}

TEST_CASE("run config round-trips through json") {
  RunConfig cfg;
  cfg.grid_path = "grid.json";
  cfg.qd.seed = 42;
  cfg.qd.batch_size = 32;
  cfg.dc.fitness_variant = 2;
  cfg.ac.similarity_distance = 2;
  cfg.dc_seconds = 12.5;
  RunConfig back = run_config_from_json_text(run_config_to_json_text(cfg));
  CHECK(back.qd.seed == 42);
  CHECK(back.qd.batch_size == 32);
  CHECK(back.dc.fitness_variant == 2);
  CHECK(back.ac.similarity_distance == 2);
  CHECK(back.dc_seconds == 12.5);
  CHECK(run_config_to_json_text(back) == run_config_to_json_text(cfg));
}
