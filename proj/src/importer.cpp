#include "topopt/importer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "topopt/rng.hpp"

namespace topopt {

using json = nlohmann::ordered_json;

DcGraph dc_graph_from_grid(const GridModel& grid) {
  DcGraph g;
  g.n_nodes = static_cast<int>(grid.nodes.size());
  g.slack = grid.slack;
  g.edges.reserve(grid.branches.size());
  for (const Branch& b : grid.branches)
    g.edges.push_back({b.from, b.to, 1.0 / b.reactance, b.in_service});
  return g;
}

namespace {

std::vector<GraphEdge> plain_edges(const DcGraph& g) {
  std::vector<GraphEdge> edges;
  edges.reserve(g.edges.size());
  for (const auto& e : g.edges) edges.push_back({e.from, e.to, e.in_service});
  return edges;
}

}  // namespace

std::vector<int> find_bridges(const DcGraph& graph) {
  return graph_bridges(graph.n_nodes, plain_edges(graph));
}

std::vector<int> enumerate_disconnectables(const GridModel& grid) {
  const int n_branches = static_cast<int>(grid.branches.size());
  std::vector<GraphEdge> edges;
  for (const Branch& b : grid.branches) edges.push_back({b.from, b.to, b.in_service});

  std::vector<char> excluded(n_branches, 0);
  for (int e = 0; e < n_branches; ++e)
    if (!grid.branches[e].in_service) excluded[e] = 1;

  for (int e : graph_bridges(static_cast<int>(grid.nodes.size()), edges)) excluded[e] = 1;

  // A branch listed in a contingency case is never offered for disconnection:
  // the joint state of "planned out" plus "its own outage" is degenerate.
  for (const ContingencyCase& c : grid.contingencies)
    for (int e : c.branches) excluded[e] = 1;

  for (const ContingencyCase& c : grid.contingencies) {
    if (c.branches.empty()) continue;
    std::vector<GraphEdge> reduced = edges;
    for (int e : c.branches) reduced[e].active = false;
    for (int e : graph_bridges(static_cast<int>(grid.nodes.size()), reduced))
      excluded[e] = 1;
  }

  std::vector<int> result;
  for (int e = 0; e < n_branches; ++e)
    if (!excluded[e]) result.push_back(e);
  return result;
}

namespace {

// Stage-1 candidate: group bit per terminal, terminal 0 pinned to group 0.
using TerminalMask = std::uint64_t;

std::vector<char> mask_to_groups(TerminalMask mask, int n_terminals) {
  std::vector<char> group(n_terminals, 0);
  for (int t = 1; t < n_terminals; ++t)
    group[t] = static_cast<char>((mask >> (t - 1)) & 1u);
  return group;
}

bool terminal_active(const GridModel& grid, const Terminal& t) {
  if (t.kind == TerminalKind::InjectionTerminal) return true;
  return grid.branches[t.element_index].in_service;
}

// Unordered partition of the station's active elements; busbar-level detail
// and out-of-service terminals do not make configurations distinct.
std::string electrical_key(const GridModel& grid, const SubstationDetail& st,
                           const std::vector<char>& group) {
  std::vector<int> g0, g1;
  for (int t = 0; t < static_cast<int>(st.terminals.size()); ++t) {
    if (!terminal_active(grid, st.terminals[t])) continue;
    (group[t] ? g1 : g0).push_back(t);
  }
  if (g0.empty() || g1.empty()) return {};  // not a real split
  if (g1.front() < g0.front()) std::swap(g0, g1);
  std::string key;
  for (int t : g0) key += std::to_string(t) + ",";
  key += "|";
  for (int t : g1) key += std::to_string(t) + ",";
  return key;
}

struct CouplerGraph {
  std::vector<std::vector<std::pair<int, int>>> adj;  // busbar -> (busbar, coupler)

  explicit CouplerGraph(const SubstationDetail& st) : adj(st.busbars.size()) {
    for (int c = 0; c < static_cast<int>(st.couplers.size()); ++c) {
      int a = st.busbar_index(st.couplers[c].first);
      int b = st.busbar_index(st.couplers[c].second);
      adj[a].emplace_back(b, c);
      adj[b].emplace_back(a, c);
    }
    for (auto& nb : adj) std::sort(nb.begin(), nb.end());
  }

  std::vector<int> bfs_order(int start) const {
    std::vector<char> seen(adj.size(), 0);
    std::vector<int> order{start}, queue{start};
    seen[start] = 1;
    std::size_t head = 0;
    while (head < queue.size()) {
      int v = queue[head++];
      for (auto [w, c] : adj[v]) {
        (void)c;
        if (!seen[w]) {
          seen[w] = 1;
          queue.push_back(w);
          order.push_back(w);
        }
      }
    }
    return order;
  }

  bool connected_subset(const std::vector<char>& member) const {
    int start = -1, count = 0;
    for (int v = 0; v < static_cast<int>(member.size()); ++v)
      if (member[v]) {
        if (start < 0) start = v;
        ++count;
      }
    if (count <= 1) return count == 1;
    std::vector<char> seen(member.size(), 0);
    std::vector<int> stack{start};
    seen[start] = 1;
    int reached = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (auto [w, c] : adj[v]) {
        (void)c;
        if (member[w] && !seen[w]) {
          seen[w] = 1;
          ++reached;
          stack.push_back(w);
        }
      }
    }
    return reached == count;
  }
};

// Maps a terminal bipartition onto busbars: grow group 0 as a breadth-first
// prefix from the reference terminal's busbar, give the rest to group 1, and
// take the smallest prefix that serves both groups. Terminals keep their
// default busbar whenever it lies in their group.
std::optional<Action> realize_action(const GridModel& grid, int substation,
                                     const std::vector<char>& group) {
  const SubstationDetail& st = grid.substations[substation];
  const int n_busbars = static_cast<int>(st.busbars.size());
  const int n_terminals = static_cast<int>(st.terminals.size());
  CouplerGraph cg(st);

  const int b_ref = st.busbar_index(st.terminals[0].default_busbar);
  std::vector<int> order = cg.bfs_order(b_ref);
  if (static_cast<int>(order.size()) != n_busbars) return std::nullopt;

  std::vector<std::vector<int>> reach(n_terminals);
  for (int t = 0; t < n_terminals; ++t) {
    for (const std::string& b : st.terminals[t].reachable)
      reach[t].push_back(st.busbar_index(b));
    std::sort(reach[t].begin(), reach[t].end());
  }

  for (int k = 0; k + 1 < n_busbars; ++k) {
    std::vector<char> in_g0(n_busbars, 0);
    for (int i = 0; i <= k; ++i) in_g0[order[i]] = 1;
    std::vector<char> in_g1(n_busbars, 0);
    for (int v = 0; v < n_busbars; ++v) in_g1[v] = !in_g0[v];
    if (!cg.connected_subset(in_g1)) continue;

    auto servable = [&](int t) {
      const std::vector<char>& side = group[t] ? in_g1 : in_g0;
      for (int b : reach[t])
        if (side[b]) return true;
      return false;
    };
    bool ok = true;
    for (int t = 0; t < n_terminals && ok; ++t) ok = servable(t);
    if (!ok) continue;

    Action action;
    action.substation = substation;
    action.group = group;
    action.busbar_assignment.resize(n_terminals);
    for (int t = 0; t < n_terminals; ++t) {
      const std::vector<char>& side = group[t] ? in_g1 : in_g0;
      int def = st.busbar_index(st.terminals[t].default_busbar);
      if (side[def]) {
        action.busbar_assignment[t] = def;
      } else {
        int pick = -1;
        for (int b : order) {  // earliest in BFS order, deterministic
          if (side[b] && std::binary_search(reach[t].begin(), reach[t].end(), b)) {
            pick = b;
            break;
          }
        }
        action.busbar_assignment[t] = pick;
        ++action.reassignment_distance;
      }
    }
    for (int c = 0; c < static_cast<int>(st.couplers.size()); ++c) {
      int a = st.busbar_index(st.couplers[c].first);
      int b = st.busbar_index(st.couplers[c].second);
      if (in_g0[a] != in_g0[b]) action.open_couplers.push_back(c);
    }
    return action;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Action> enumerate_station_actions(const GridModel& grid, int substation,
                                              const EnumerationConfig& config) {
  const SubstationDetail& st = grid.substations[substation];
  const int n_terminals = static_cast<int>(st.terminals.size());
  if (st.busbars.size() < 2 || n_terminals < 2) return {};

  Rng rng(derive_seed(config.seed, 0x5741u, static_cast<std::uint64_t>(substation)));

  std::vector<std::vector<char>> candidates;
  std::set<std::string> seen;
  auto consider = [&](TerminalMask mask) {
    std::vector<char> group = mask_to_groups(mask, n_terminals);
    std::string key = electrical_key(grid, st, group);
    if (key.empty() || !seen.insert(key).second) return;
    candidates.push_back(std::move(group));
  };

  const int free_bits = n_terminals - 1;
  if (free_bits <= 30 && (std::int64_t{1} << free_bits) <= (config.cap << 1)) {
    const TerminalMask total = TerminalMask{1} << free_bits;
    for (TerminalMask mask = 1; mask < total; ++mask) consider(mask);
    if (static_cast<std::int64_t>(candidates.size()) > config.cap) {
      std::vector<std::vector<char>> sampled;
      std::sample(candidates.begin(), candidates.end(), std::back_inserter(sampled),
                  config.cap, rng);
      candidates = std::move(sampled);
    }
  } else {
    // Too many bipartitions to enumerate; draw a random subset of masks.
    std::uniform_int_distribution<TerminalMask> dist(
        1, (TerminalMask{1} << free_bits) - 1);
    for (std::int64_t draws = 0;
         draws < config.cap * 2 && static_cast<std::int64_t>(candidates.size()) < config.cap;
         ++draws)
      consider(dist(rng));
  }

  std::vector<Action> actions;
  for (const std::vector<char>& group : candidates) {
    if (auto action = realize_action(grid, substation, group))
      actions.push_back(std::move(*action));
  }
  return actions;
}

namespace {

// Bus/branch graph with one station split applied: the station node keeps
// group 0, a fresh node takes group 1's branch ends.
std::vector<GraphEdge> split_edges(const GridModel& grid, const Action& action,
                                   int new_node, bool& new_node_used) {
  const SubstationDetail& st = grid.substations[action.substation];
  std::vector<GraphEdge> edges;
  edges.reserve(grid.branches.size());
  for (const Branch& b : grid.branches) edges.push_back({b.from, b.to, b.in_service});
  new_node_used = false;
  for (int t = 0; t < static_cast<int>(st.terminals.size()); ++t) {
    if (!action.group[t]) continue;
    const Terminal& term = st.terminals[t];
    if (term.kind == TerminalKind::InjectionTerminal) {
      new_node_used = true;
      continue;
    }
    GraphEdge& e = edges[term.element_index];
    if (term.kind == TerminalKind::BranchFrom)
      e.from = new_node;
    else
      e.to = new_node;
    if (e.active) new_node_used = true;
  }
  return edges;
}

}  // namespace

bool validate_action_islanding(const GridModel& grid, const Action& action) {
  const int n_nodes = static_cast<int>(grid.nodes.size());
  bool new_node_used = false;
  std::vector<GraphEdge> edges = split_edges(grid, action, n_nodes, new_node_used);

  std::vector<int> must_reach(n_nodes);
  std::iota(must_reach.begin(), must_reach.end(), 0);
  if (new_node_used) must_reach.push_back(n_nodes);

  if (!graph_connected(n_nodes + 1, edges, must_reach)) return false;

  // Single-branch contingencies are answered from one bridge pass.
  std::vector<int> bridges = graph_bridges(n_nodes + 1, edges);
  std::vector<char> is_bridge(edges.size(), 0);
  for (int e : bridges) is_bridge[e] = 1;

  for (const ContingencyCase& c : grid.contingencies) {
    if (c.branches.empty()) continue;
    if (c.branches.size() == 1) {
      if (edges[c.branches[0]].active && is_bridge[c.branches[0]]) return false;
    } else if (!graph_connected_without(n_nodes + 1, edges, c.branches, must_reach)) {
      return false;
    }
  }
  return true;
}

ActionSet build_action_set(const GridModel& grid, const EnumerationConfig& config) {
  ActionSet set;
  set.disconnectables = enumerate_disconnectables(grid);
  for (int s = 0; s < static_cast<int>(grid.substations.size()); ++s) {
    std::vector<Action> station_actions = enumerate_station_actions(grid, s, config);
    int begin = static_cast<int>(set.actions.size());
    for (Action& a : station_actions) {
      if (!validate_action_islanding(grid, a)) continue;
      a.id = static_cast<int>(set.actions.size());
      set.actions.push_back(std::move(a));
    }
    int end = static_cast<int>(set.actions.size());
    if (end > begin) set.station_ranges[s] = {begin, end};
  }
  return set;
}

PTDFMatrix build_ptdf(const DcGraph& graph) {
  const int n = graph.n_nodes;
  const int n_red = n - 1;
  std::vector<int> reduced(n, -1);
  for (int v = 0, r = 0; v < n; ++v)
    if (v != graph.slack) reduced[v] = r++;

  Eigen::MatrixXd b_mat = Eigen::MatrixXd::Zero(n_red, n_red);
  for (const auto& e : graph.edges) {
    if (!e.in_service) continue;
    int i = reduced[e.from], j = reduced[e.to];
    if (i >= 0) b_mat(i, i) += e.susceptance;
    if (j >= 0) b_mat(j, j) += e.susceptance;
    if (i >= 0 && j >= 0) {
      b_mat(i, j) -= e.susceptance;
      b_mat(j, i) -= e.susceptance;
    }
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(b_mat);
  if (!lu.isInvertible())
    throw SingularSystem("susceptance matrix is singular; the grid is disconnected");
  Eigen::MatrixXd x_inv = lu.inverse();

  PTDFMatrix ptdf;
  ptdf.slack = graph.slack;
  ptdf.sensitivities = Eigen::MatrixXd::Zero(graph.edges.size(), n);
  for (int e = 0; e < static_cast<int>(graph.edges.size()); ++e) {
    const auto& edge = graph.edges[e];
    ptdf.from.push_back(edge.from);
    ptdf.to.push_back(edge.to);
    ptdf.in_service.push_back(edge.in_service);
    if (!edge.in_service) continue;
    int i = reduced[edge.from], j = reduced[edge.to];
    for (int v = 0; v < n; ++v) {
      int rv = reduced[v];
      if (rv < 0) continue;  // slack column stays zero
      double xi = i >= 0 ? x_inv(i, rv) : 0.0;
      double xj = j >= 0 ? x_inv(j, rv) : 0.0;
      ptdf.sensitivities(e, v) = edge.susceptance * (xi - xj);
    }
  }
  return ptdf;
}

PTDFMatrix build_ptdf(const GridModel& grid) {
  return build_ptdf(dc_graph_from_grid(grid));
}

void save_action_set(const ActionSet& actions, const GridModel& grid,
                     const std::filesystem::path& path) {
  json doc;
  doc["grid_hash"] = grid_content_hash(grid);
  doc["disconnectables"] = json::array();
  for (int e : actions.disconnectables)
    doc["disconnectables"].push_back(grid.branches[e].id);
  doc["actions"] = json::array();
  for (const Action& a : actions.actions) {
    const SubstationDetail& st = grid.substations[a.substation];
    json ja;
    ja["node"] = grid.nodes[st.node].id;
    ja["group"] = json::array();
    for (char g : a.group) ja["group"].push_back(static_cast<int>(g));
    ja["busbars"] = json::array();
    for (int b : a.busbar_assignment) ja["busbars"].push_back(st.busbars[b]);
    ja["open_couplers"] = a.open_couplers;
    ja["lambda_r"] = a.reassignment_distance;
    doc["actions"].push_back(ja);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write action cache '" + path.string() + "'");
  out << doc.dump() << "\n";
}

std::optional<ActionSet> load_action_set(const GridModel& grid,
                                         const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json doc;
  try {
    in >> doc;
  } catch (const json::exception&) {
    return std::nullopt;
  }
  if (!doc.contains("grid_hash") ||
      doc.at("grid_hash").get<std::uint64_t>() != grid_content_hash(grid))
    return std::nullopt;

  ActionSet set;
  for (const json& jd : doc.at("disconnectables")) {
    int e = grid.branch_index(jd.get<std::string>());
    if (e < 0) return std::nullopt;
    set.disconnectables.push_back(e);
  }
  for (const json& ja : doc.at("actions")) {
    Action a;
    int node = grid.node_index(ja.at("node").get<std::string>());
    if (node < 0) return std::nullopt;
    a.substation = grid.substation_at(node);
    if (a.substation < 0) return std::nullopt;
    const SubstationDetail& st = grid.substations[a.substation];
    for (const json& jg : ja.at("group")) a.group.push_back(jg.get<int>() ? 1 : 0);
    for (const json& jb : ja.at("busbars")) {
      int b = st.busbar_index(jb.get<std::string>());
      if (b < 0) return std::nullopt;
      a.busbar_assignment.push_back(b);
    }
    a.open_couplers = ja.at("open_couplers").get<std::vector<int>>();
    a.reassignment_distance = ja.at("lambda_r").get<int>();
    a.id = static_cast<int>(set.actions.size());
    set.actions.push_back(std::move(a));
  }
  for (int i = 0; i < static_cast<int>(set.actions.size()); ++i) {
    int s = set.actions[i].substation;
    auto it = set.station_ranges.find(s);
    if (it == set.station_ranges.end())
      set.station_ranges[s] = {i, i + 1};
    else
      it->second.second = i + 1;
  }
  return set;
}

}  // namespace topopt
