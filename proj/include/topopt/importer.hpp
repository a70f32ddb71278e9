#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "topopt/grid_model.hpp"
#include "topopt/graph_utils.hpp"

namespace topopt {

// One substation reconfiguration: a two-way partition of the station's
// terminals realized in the node-breaker model.
struct Action {
  int id = -1;
  int substation = -1;            // index into GridModel::substations
  std::vector<char> group;        // per terminal: 0 or 1, group 0 holds terminal 0
  std::vector<int> busbar_assignment;  // per terminal: busbar index
  std::vector<int> open_couplers;      // coupler indices opened by this action
  int reassignment_distance = 0;       // terminals moved off their default busbar
};

struct ActionSet {
  std::vector<Action> actions;
  std::vector<int> disconnectables;  // branch indices eligible for disconnection
  // substation detail index -> contiguous [begin, end) range of action ids
  std::map<int, std::pair<int, int>> station_ranges;

  int substation_of(int action_id) const { return actions[action_id].substation; }
};

struct PTDFMatrix {
  Eigen::MatrixXd sensitivities;  // N_e x N_n, slack column zero
  int slack = -1;
  // topology record the matrix was built for
  std::vector<int> from;
  std::vector<int> to;
  std::vector<char> in_service;
};

// Plain bus/branch view used by the DC formulation; susceptance = 1/x.
struct DcGraph {
  int n_nodes = 0;
  int slack = -1;
  struct Edge {
    int from;
    int to;
    double susceptance;
    bool in_service;
  };
  std::vector<Edge> edges;
};

DcGraph dc_graph_from_grid(const GridModel& grid);

// Edges whose removal disconnects the active subgraph.
std::vector<int> find_bridges(const DcGraph& graph);

// Branches that survive removal under the base case and every contingency.
// A branch that itself appears in a contingency case is excluded.
std::vector<int> enumerate_disconnectables(const GridModel& grid);

struct EnumerationConfig {
  std::int64_t cap = std::int64_t{1} << 23;  // max stage-1 candidates per station
  std::uint64_t seed = 0;                    // down-sampling RNG seed
};

// All electrically distinct two-node reconfigurations of one station that
// have a valid node-breaker realization. Returns an empty list when the
// station cannot be split.
std::vector<Action> enumerate_station_actions(const GridModel& grid,
                                              int substation,
                                              const EnumerationConfig& config = {});

// Rejects an action iff applying the split disconnects the grid in the base
// case or under any contingency.
bool validate_action_islanding(const GridModel& grid, const Action& action);

// Full import step: disconnectables, per-station actions (islanding-checked,
// merged by station), contiguous ids.
ActionSet build_action_set(const GridModel& grid, const EnumerationConfig& config = {});

PTDFMatrix build_ptdf(const DcGraph& graph);
PTDFMatrix build_ptdf(const GridModel& grid);

// Cache keyed by grid content hash; load returns nothing on key mismatch.
void save_action_set(const ActionSet& actions, const GridModel& grid,
                     const std::filesystem::path& path);
std::optional<ActionSet> load_action_set(const GridModel& grid,
                                         const std::filesystem::path& path);

}  // namespace topopt
