#include "topopt/graph_utils.hpp"

#include <algorithm>

namespace topopt {

namespace {

struct Adjacency {
  // (neighbour, edge index) pairs per node
  std::vector<std::vector<std::pair<int, int>>> adj;

  Adjacency(int n_nodes, const std::vector<GraphEdge>& edges,
            const std::vector<char>& removed) : adj(n_nodes) {
    for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
      if (!edges[e].active || removed[e]) continue;
      adj[edges[e].from].emplace_back(edges[e].to, e);
      adj[edges[e].to].emplace_back(edges[e].from, e);
    }
  }
};

std::vector<char> removal_mask(std::size_t n_edges, const std::vector<int>& removed) {
  std::vector<char> mask(n_edges, 0);
  for (int e : removed) mask[e] = 1;
  return mask;
}

}  // namespace

bool graph_connected_without(int n_nodes, const std::vector<GraphEdge>& edges,
                             const std::vector<int>& removed,
                             const std::vector<int>& must_reach) {
  Adjacency g(n_nodes, edges, removal_mask(edges.size(), removed));

  std::vector<char> attached(n_nodes, 0);
  for (int v : must_reach) attached[v] = 1;
  int start = must_reach.empty() ? -1 : must_reach.front();
  for (int v = 0; v < n_nodes; ++v) {
    if (!g.adj[v].empty()) {
      attached[v] = 1;
      if (start < 0) start = v;
    }
  }
  if (start < 0) return true;  // nothing to connect

  std::vector<char> seen(n_nodes, 0);
  std::vector<int> stack{start};
  seen[start] = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (auto [w, e] : g.adj[v]) {
      (void)e;
      if (!seen[w]) {
        seen[w] = 1;
        stack.push_back(w);
      }
    }
  }
  for (int v = 0; v < n_nodes; ++v)
    if (attached[v] && !seen[v]) return false;
  return true;
}

bool graph_connected(int n_nodes, const std::vector<GraphEdge>& edges,
                     const std::vector<int>& must_reach) {
  return graph_connected_without(n_nodes, edges, {}, must_reach);
}

std::vector<int> graph_bridges(int n_nodes, const std::vector<GraphEdge>& edges) {
  Adjacency g(n_nodes, edges, std::vector<char>(edges.size(), 0));

  std::vector<int> disc(n_nodes, -1), low(n_nodes, -1);
  std::vector<int> bridges;
  int tick = 0;

  // Iterative DFS; frame remembers the edge used to enter the node so the
  // reverse direction of that same edge (not merely the parent node) is
  // skipped, which keeps parallel edges correct.
  struct Frame {
    int node;
    int via_edge;
    std::size_t next;
  };
  std::vector<Frame> stack;
  for (int root = 0; root < n_nodes; ++root) {
    if (disc[root] != -1 || g.adj[root].empty()) continue;
    stack.push_back({root, -1, 0});
    disc[root] = low[root] = tick++;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < g.adj[f.node].size()) {
        auto [w, e] = g.adj[f.node][f.next++];
        if (e == f.via_edge) continue;
        if (disc[w] == -1) {
          disc[w] = low[w] = tick++;
          stack.push_back({w, e, 0});
        } else {
          low[f.node] = std::min(low[f.node], disc[w]);
        }
      } else {
        int v = f.node;
        int via = f.via_edge;
        stack.pop_back();
        if (!stack.empty()) {
          int parent = stack.back().node;
          low[parent] = std::min(low[parent], low[v]);
          if (low[v] > disc[parent]) bridges.push_back(via);
        }
      }
    }
  }
  std::sort(bridges.begin(), bridges.end());
  return bridges;
}

}  // namespace topopt
