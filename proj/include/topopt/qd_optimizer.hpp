#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <vector>

#include "topopt/dc_engine.hpp"
#include "topopt/genome.hpp"
#include "topopt/rng.hpp"

namespace topopt {

struct QdConfig {
  int n_a = 3;  // action slots
  int n_d = 2;  // disconnection slots
  int batch_size = 64;
  int iters_per_epoch = 500;
  int cell_capacity = 4;
  double mutation_mean = 2.0;
  // add, remove, change, identity
  std::array<double, 4> p_action{0.2, 0.2, 0.5, 0.1};
  std::array<double, 4> p_disc{0.25, 0.25, 0.5, 0.0};
  double p_crossover_parent1 = 0.75;
  int d_max = 2;
  int s_max = 3;
  int r_max = 45;
  std::uint64_t seed = 1;
  std::int64_t max_evaluations = -1;  // < 0: unlimited
  double max_seconds = -1.0;          // < 0: unlimited
};

inline int cell_count(const QdConfig& cfg) {
  return (cfg.d_max + 1) * (cfg.s_max + 1) * (cfg.r_max + 1);
}

// Bijective map from the clamped descriptor box onto 0..cell_count-1.
int descriptor_to_cell(int lambda_d, int lambda_s, int lambda_r, const QdConfig& cfg);

enum class MutationOp { Add, Remove, Change, Identity };

struct MutationTrace {
  std::vector<MutationOp> action_ops;
  std::vector<MutationOp> disconnection_ops;
};

Genome mutate(const Genome& g, const ActionSet& actions, const QdConfig& cfg, Rng& rng,
              MutationTrace* trace = nullptr);

Genome crossover(const Genome& g1, const Genome& g2, const ActionSet& actions,
                 const QdConfig& cfg, Rng& rng);

struct RepertoireEntry {
  Genome genome;
  ScoreVector score;
  std::string key;  // cached canonical key
};

class Repertoire {
 public:
  explicit Repertoire(const QdConfig& cfg);

  // Sorted insert into the descriptor cell; duplicates and entries that do
  // not beat a full cell's minimum are dropped. Returns true when stored.
  bool insert(const Genome& genome, const ScoreVector& score);

  int total_size() const { return total_; }
  const RepertoireEntry& member(int flat_index) const;
  const std::vector<RepertoireEntry>& cell(int index) const { return cells_[index]; }
  int n_cells() const { return static_cast<int>(cells_.size()); }
  double best_fitness() const;
  std::vector<double> per_cell_best() const;

 private:
  QdConfig cfg_;
  std::vector<std::vector<RepertoireEntry>> cells_;
  int total_ = 0;
  mutable std::vector<std::pair<int, int>> flat_;  // (cell, position)
  mutable bool flat_dirty_ = true;
};

struct SnapshotEntry {
  int cell = 0;
  Genome genome;
  ScoreVector score;
};

struct RepertoireSnapshot {
  int epoch = 0;
  std::int64_t evaluations = 0;
  double best_fitness = 0.0;
  bool final = false;
  std::vector<SnapshotEntry> entries;
};

RepertoireSnapshot make_snapshot(const Repertoire& rep, int epoch,
                                 std::int64_t evaluations, bool final);

using SnapshotSink = std::function<void(RepertoireSnapshot)>;

struct OptimizerStats {
  std::int64_t evaluations = 0;
  int epochs = 0;
  // (evaluations, best fitness) per epoch
  std::vector<std::pair<std::int64_t, double>> fitness_trace;
};

struct OptimizerResult {
  Repertoire repertoire;
  OptimizerStats stats;
};

// Batched MapElites loop seeded with the unchanged topology. Snapshots are
// emitted after every epoch; the last one carries final = true.
OptimizerResult run_optimizer(const DcContext& ctx, const QdConfig& cfg,
                              const SnapshotSink& sink,
                              const std::atomic<bool>* stop = nullptr);

}  // namespace topopt
