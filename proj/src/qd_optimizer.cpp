#include "topopt/qd_optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "topopt/errors.hpp"

namespace topopt {

int descriptor_to_cell(int lambda_d, int lambda_s, int lambda_r, const QdConfig& cfg) {
  int d = std::min(lambda_d, cfg.d_max);
  int s = std::min(lambda_s, cfg.s_max);
  int r = std::min(lambda_r, cfg.r_max);
  return d + (cfg.d_max + 1) * (s + (cfg.s_max + 1) * r);
}

namespace {

int uniform_index(Rng& rng, int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

std::vector<int> empty_slots(const std::vector<int>& slots) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(slots.size()); ++i)
    if (slots[i] < 0) out.push_back(i);
  return out;
}

std::vector<int> filled_slots(const std::vector<int>& slots) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(slots.size()); ++i)
    if (slots[i] >= 0) out.push_back(i);
  return out;
}

// Pool of action ids outside the already-used substations; sampled by rank
// so the exponential action set never has to be materialized.
struct AddActionPool {
  std::vector<std::pair<int, int>> excluded;  // [begin, end) ranges, sorted
  int size = 0;

  AddActionPool(const Genome& g, const ActionSet& actions) {
    int excluded_count = 0;
    for (int a : g.action_slots) {
      if (a < 0) continue;
      auto range = actions.station_ranges.at(actions.substation_of(a));
      excluded.push_back(range);
      excluded_count += range.second - range.first;
    }
    std::sort(excluded.begin(), excluded.end());
    size = static_cast<int>(actions.actions.size()) - excluded_count;
  }

  int pick(int rank) const {
    int cursor = 0;
    for (auto [begin, end] : excluded) {
      int gap = begin - cursor;
      if (rank < gap) return cursor + rank;
      rank -= gap;
      cursor = end;
    }
    return cursor + rank;
  }
};

std::vector<int> change_action_pool(const Genome& g, const ActionSet& actions) {
  std::set<int> current(g.action_slots.begin(), g.action_slots.end());
  std::vector<int> pool;
  for (int a : g.action_slots) {
    if (a < 0) continue;
    auto range = actions.station_ranges.at(actions.substation_of(a));
    for (int cand = range.first; cand < range.second; ++cand)
      if (!current.count(cand)) pool.push_back(cand);
  }
  return pool;
}

struct DiscPool {
  std::vector<int> used;  // sorted slot values
  int size = 0;

  DiscPool(const Genome& g, const ActionSet& actions) {
    for (int d : g.disconnection_slots)
      if (d >= 0) used.push_back(d);
    std::sort(used.begin(), used.end());
    size = static_cast<int>(actions.disconnectables.size()) -
           static_cast<int>(used.size());
  }

  int pick(int rank) const {
    for (int u : used)
      if (rank >= u) ++rank;
    return rank;
  }
};

MutationOp choose_feasible_op(const std::array<double, 4>& weights,
                              const std::array<bool, 4>& feasible, Rng& rng) {
  double total = 0.0;
  for (int i = 0; i < 4; ++i)
    if (feasible[i]) total += weights[i];
  if (total <= 0.0) return MutationOp::Identity;
  double draw = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (int i = 0; i < 4; ++i) {
    if (!feasible[i]) continue;
    if (draw < weights[i]) return static_cast<MutationOp>(i);
    draw -= weights[i];
  }
  return MutationOp::Identity;
}

void mutate_actions_once(Genome& g, const ActionSet& actions, const QdConfig& cfg,
                         Rng& rng, MutationTrace* trace) {
  AddActionPool add_pool(g, actions);
  std::vector<int> empties = empty_slots(g.action_slots);
  std::vector<int> filled = filled_slots(g.action_slots);
  std::vector<int> change_pool = change_action_pool(g, actions);

  std::array<bool, 4> feasible{};
  feasible[0] = !empties.empty() && add_pool.size > 0;
  feasible[1] = !filled.empty();
  feasible[2] = !change_pool.empty();
  feasible[3] = true;
  MutationOp op = choose_feasible_op(cfg.p_action, feasible, rng);
  if (trace) trace->action_ops.push_back(op);

  switch (op) {
    case MutationOp::Add: {
      int slot = empties[uniform_index(rng, static_cast<int>(empties.size()))];
      g.action_slots[slot] = add_pool.pick(uniform_index(rng, add_pool.size));
      break;
    }
    case MutationOp::Remove: {
      int slot = filled[uniform_index(rng, static_cast<int>(filled.size()))];
      g.action_slots[slot] = -1;
      break;
    }
    case MutationOp::Change: {
      int pick = change_pool[uniform_index(rng, static_cast<int>(change_pool.size()))];
      int station = actions.substation_of(pick);
      for (int& slot : g.action_slots) {
        if (slot >= 0 && actions.substation_of(slot) == station) {
          slot = pick;
          break;
        }
      }
      break;
    }
    case MutationOp::Identity:
      break;
  }
}

void mutate_disconnections_once(Genome& g, const ActionSet& actions,
                                const QdConfig& cfg, Rng& rng, MutationTrace* trace) {
  DiscPool pool(g, actions);
  std::vector<int> empties = empty_slots(g.disconnection_slots);
  std::vector<int> filled = filled_slots(g.disconnection_slots);

  std::array<bool, 4> feasible{};
  feasible[0] = !empties.empty() && pool.size > 0;
  feasible[1] = !filled.empty();
  feasible[2] = !filled.empty() && pool.size > 0;
  feasible[3] = true;

  MutationOp op;
  if (g.is_empty() && feasible[0]) {
    // never reproduce the unchanged topology from an empty parent
    op = MutationOp::Add;
  } else {
    op = choose_feasible_op(cfg.p_disc, feasible, rng);
  }
  if (trace) trace->disconnection_ops.push_back(op);

  switch (op) {
    case MutationOp::Add: {
      int slot = empties[uniform_index(rng, static_cast<int>(empties.size()))];
      g.disconnection_slots[slot] = pool.pick(uniform_index(rng, pool.size));
      break;
    }
    case MutationOp::Remove: {
      int slot = filled[uniform_index(rng, static_cast<int>(filled.size()))];
      g.disconnection_slots[slot] = -1;
      break;
    }
    case MutationOp::Change: {
      int pick = pool.pick(uniform_index(rng, pool.size));
      int slot = filled[uniform_index(rng, static_cast<int>(filled.size()))];
      g.disconnection_slots[slot] = pick;
      break;
    }
    case MutationOp::Identity:
      break;
  }
}

}  // namespace

Genome mutate(const Genome& g, const ActionSet& actions, const QdConfig& cfg, Rng& rng,
              MutationTrace* trace) {
  Genome out = g;
  int n_mut = std::poisson_distribution<int>(cfg.mutation_mean)(rng);
  n_mut = std::clamp(n_mut, 1, std::max(1, cfg.n_a));
  for (int r = 0; r < n_mut; ++r) mutate_actions_once(out, actions, cfg, rng, trace);
  mutate_disconnections_once(out, actions, cfg, rng, trace);
  return out;
}

namespace {

// Sample one slot value from the union of the parents' entries: parent 1's
// side carries total probability p_c1. An exhausted side keeps its weight at
// zero, so p_c1 = 1 reproduces parent 1 exactly.
int crossover_draw(const std::vector<int>& pool1, const std::vector<int>& pool2,
                   double p_c1, Rng& rng) {
  double w1 = pool1.empty() ? 0.0 : p_c1;
  double w2 = pool2.empty() ? 0.0 : 1.0 - p_c1;
  if (w1 + w2 <= 0.0) return -1;
  const std::vector<int>* side;
  if (w1 == 0.0)
    side = &pool2;
  else if (w2 == 0.0)
    side = &pool1;
  else
    side = std::uniform_real_distribution<double>(0.0, w1 + w2)(rng) < w1 ? &pool1
                                                                          : &pool2;
  return (*side)[uniform_index(rng, static_cast<int>(side->size()))];
}

}  // namespace

Genome crossover(const Genome& g1, const Genome& g2, const ActionSet& actions,
                 const QdConfig& cfg, Rng& rng) {
  Genome child = Genome::empty(cfg.n_a, cfg.n_d);

  std::vector<int> p1_actions = g1.action_ids();
  std::vector<int> p2_actions = g2.action_ids();
  std::set<int> used_stations;
  std::set<int> placed;
  for (int i = 0; i < cfg.n_a; ++i) {
    auto admissible = [&](int a) {
      return !placed.count(a) && !used_stations.count(actions.substation_of(a));
    };
    std::vector<int> pool1, pool2;
    for (int a : p1_actions)
      if (admissible(a)) pool1.push_back(a);
    for (int a : p2_actions)
      if (admissible(a) && !std::binary_search(p1_actions.begin(), p1_actions.end(), a))
        pool2.push_back(a);
    int pick = crossover_draw(pool1, pool2, cfg.p_crossover_parent1, rng);
    if (pick < 0) break;
    child.action_slots[i] = pick;
    placed.insert(pick);
    used_stations.insert(actions.substation_of(pick));
  }

  std::vector<int> p1_disc = g1.disconnection_ids();
  std::vector<int> p2_disc = g2.disconnection_ids();
  std::set<int> placed_disc;
  for (int i = 0; i < cfg.n_d; ++i) {
    std::vector<int> pool1, pool2;
    for (int d : p1_disc)
      if (!placed_disc.count(d)) pool1.push_back(d);
    for (int d : p2_disc)
      if (!placed_disc.count(d) &&
          !std::binary_search(p1_disc.begin(), p1_disc.end(), d))
        pool2.push_back(d);
    int pick = crossover_draw(pool1, pool2, cfg.p_crossover_parent1, rng);
    if (pick < 0) break;
    child.disconnection_slots[i] = pick;
    placed_disc.insert(pick);
  }
  return child;
}

Repertoire::Repertoire(const QdConfig& cfg) : cfg_(cfg), cells_(cell_count(cfg)) {}

bool Repertoire::insert(const Genome& genome, const ScoreVector& score) {
  if (!std::isfinite(score.fitness)) return false;
  int cell = descriptor_to_cell(score.lambda_d, score.lambda_s, score.lambda_r, cfg_);
  auto& list = cells_[cell];
  std::string key = genome.canonical_key();
  for (const RepertoireEntry& e : list)
    if (e.key == key) return false;
  if (static_cast<int>(list.size()) >= cfg_.cell_capacity &&
      score.fitness <= list.back().score.fitness)
    return false;
  auto pos = std::upper_bound(list.begin(), list.end(), score.fitness,
                              [](double f, const RepertoireEntry& e) {
                                return f > e.score.fitness;
                              });
  list.insert(pos, RepertoireEntry{genome, score, std::move(key)});
  if (static_cast<int>(list.size()) > cfg_.cell_capacity) {
    list.pop_back();
  } else {
    ++total_;
  }
  flat_dirty_ = true;
  return true;
}

const RepertoireEntry& Repertoire::member(int flat_index) const {
  if (flat_dirty_) {
    flat_.clear();
    for (int c = 0; c < static_cast<int>(cells_.size()); ++c)
      for (int i = 0; i < static_cast<int>(cells_[c].size()); ++i)
        flat_.emplace_back(c, i);
    flat_dirty_ = false;
  }
  auto [c, i] = flat_[flat_index];
  return cells_[c][i];
}

double Repertoire::best_fitness() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& list : cells_)
    if (!list.empty()) best = std::max(best, list.front().score.fitness);
  return best;
}

std::vector<double> Repertoire::per_cell_best() const {
  std::vector<double> best(cells_.size(), -std::numeric_limits<double>::infinity());
  for (int c = 0; c < static_cast<int>(cells_.size()); ++c)
    if (!cells_[c].empty()) best[c] = cells_[c].front().score.fitness;
  return best;
}

RepertoireSnapshot make_snapshot(const Repertoire& rep, int epoch,
                                 std::int64_t evaluations, bool final) {
  RepertoireSnapshot snap;
  snap.epoch = epoch;
  snap.evaluations = evaluations;
  snap.best_fitness = rep.best_fitness();
  snap.final = final;
  for (int c = 0; c < rep.n_cells(); ++c)
    for (const RepertoireEntry& e : rep.cell(c))
      snap.entries.push_back(SnapshotEntry{c, e.genome, e.score});
  return snap;
}

OptimizerResult run_optimizer(const DcContext& ctx, const QdConfig& cfg,
                              const SnapshotSink& sink,
                              const std::atomic<bool>* stop) {
  if (cfg.batch_size <= 0) throw ConfigError("batch size must be positive");
  const ActionSet& actions = ctx.actions();
  if (actions.actions.empty() && actions.disconnectables.empty())
    throw ConfigError("nothing to optimize: no actions and no disconnectable branches");

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };

  OptimizerResult result{Repertoire(cfg), {}};
  Repertoire& rep = result.repertoire;

  Genome seed_genome = Genome::empty(cfg.n_a, cfg.n_d);
  rep.insert(seed_genome, ctx.evaluate(seed_genome));
  std::int64_t evaluations = 1;

  auto exhausted = [&] {
    if (stop && stop->load(std::memory_order_relaxed)) return true;
    if (cfg.max_evaluations >= 0 && evaluations >= cfg.max_evaluations) return true;
    if (cfg.max_seconds >= 0.0 && elapsed() >= cfg.max_seconds) return true;
    return false;
  };

  int epoch = 0;
  std::int64_t iter_global = 0;
  bool emitted_final = false;
  while (!exhausted()) {
    for (int iter = 0; iter < cfg.iters_per_epoch && !exhausted(); ++iter) {
      Rng iter_rng(derive_seed(cfg.seed, 0x17e7, static_cast<std::uint64_t>(iter_global)));
      int b_mc = std::uniform_int_distribution<int>(0, cfg.batch_size)(iter_rng);

      std::vector<Genome> offspring(cfg.batch_size);
      for (int lane = 0; lane < cfg.batch_size; ++lane) {
        Rng lane_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(iter_global),
                                 static_cast<std::uint64_t>(lane) + 1));
        if (lane < b_mc) {
          const RepertoireEntry& parent =
              rep.member(uniform_index(lane_rng, rep.total_size()));
          offspring[lane] = mutate(parent.genome, actions, cfg, lane_rng);
        } else {
          const RepertoireEntry& p1 =
              rep.member(uniform_index(lane_rng, rep.total_size()));
          const RepertoireEntry& p2 =
              rep.member(uniform_index(lane_rng, rep.total_size()));
          offspring[lane] = crossover(p1.genome, p2.genome, actions, cfg, lane_rng);
        }
      }

      std::vector<ScoreVector> scores = ctx.evaluate_batch(offspring, cfg.batch_size);
      for (int lane = 0; lane < cfg.batch_size; ++lane)
        rep.insert(offspring[lane], scores[lane]);
      evaluations += cfg.batch_size;
      ++iter_global;
    }
    ++epoch;
    result.stats.fitness_trace.emplace_back(evaluations, rep.best_fitness());
    bool fin = exhausted();
    if (sink) sink(make_snapshot(rep, epoch, evaluations, fin));
    if (fin) {
      emitted_final = true;
      break;
    }
  }
  if (!emitted_final && sink) sink(make_snapshot(rep, epoch, evaluations, true));

  result.stats.evaluations = evaluations;
  result.stats.epochs = epoch;
  return result;
}

}  // namespace topopt
