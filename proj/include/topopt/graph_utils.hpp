#pragma once

#include <cstdint>
#include <vector>

namespace topopt {

// Undirected multigraph edge; parallel edges are distinct.
struct GraphEdge {
  int from = -1;
  int to = -1;
  bool active = true;
};

// True when every node with at least one active incident edge (plus every
// node listed in `must_reach`) lies in a single connected component.
bool graph_connected(int n_nodes, const std::vector<GraphEdge>& edges,
                     const std::vector<int>& must_reach = {});

// Same check with an extra set of edge indices treated as removed.
bool graph_connected_without(int n_nodes, const std::vector<GraphEdge>& edges,
                             const std::vector<int>& removed,
                             const std::vector<int>& must_reach = {});

// Bridge edges of the active subgraph (Tarjan low-link, iterative).
// Parallel edges are handled individually: a doubled edge is never a bridge.
std::vector<int> graph_bridges(int n_nodes, const std::vector<GraphEdge>& edges);

}  // namespace topopt
