#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace topopt {

struct ActionSet;

// One candidate topology: fixed-size slots holding indices into the action
// set and the disconnectable-branch list, -1 for an empty slot.
struct Genome {
  std::vector<int> action_slots;
  std::vector<int> disconnection_slots;

  static Genome empty(int n_a, int n_d) {
    return Genome{std::vector<int>(n_a, -1), std::vector<int>(n_d, -1)};
  }

  bool is_empty() const;
  int split_count() const;
  int disconnection_count() const;

  // Sorted non-empty entries; slot order is irrelevant to the topology.
  std::vector<int> action_ids() const;
  std::vector<int> disconnection_ids() const;

  // Stable key for duplicate detection and similarity distance.
  std::string canonical_key() const;

  bool operator==(const Genome& other) const {
    return canonical_key() == other.canonical_key();
  }
};

// Non-empty actions from pairwise distinct substations, non-empty
// disconnections pairwise distinct.
bool genome_valid(const Genome& g, const ActionSet& actions);

// Symmetric-difference distance between the action and disconnection sets.
int genome_distance(const Genome& a, const Genome& b);

class GridModel;

// Bus/branch effect of a genome: one extra electrical node per split (the
// station node keeps group 0), branch ends and injections rewired, selected
// branches out of service.
struct AppliedTopology {
  std::vector<std::pair<int, int>> endpoints;  // per branch, node ids
  std::vector<char> removed;                   // per branch
  std::vector<int> injection_node;             // per injection
  std::vector<int> action_of_station;          // substation detail -> action id
  int n_new_nodes = 0;
};

AppliedTopology apply_genome(const GridModel& grid, const ActionSet& actions,
                             const Genome& genome);

}  // namespace topopt
