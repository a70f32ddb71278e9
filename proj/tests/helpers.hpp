#pragma once

// Shared fixtures and independent oracles. Oracle code deliberately avoids the
// implementation paths it checks: connectivity is a plain BFS, reference flows
// come from rebuilding the susceptance system from scratch.

#include <algorithm>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "topopt/dc_engine.hpp"
#include "topopt/genome.hpp"
#include "topopt/grid_model.hpp"
#include "topopt/importer.hpp"

namespace topopt::testing {

using nlohmann::json;

inline GridModel grid_from_json(const json& j) {
  return grid_from_json_text(j.dump());
}

// --- tiny fixed grids -------------------------------------------------------

inline GridModel two_node_grid() {
  json j = {
      {"nodes", {{{"id", "a"}}, {{"id", "b"}}}},
      {"branches",
       {{{"id", "ab"}, {"from", "a"}, {"to", "b"}, {"x_pu", 0.1}, {"limit_mw", 150.0}}}},
      {"injections",
       {{{"id", "g"}, {"node", "a"}, {"p_mw", 100.0}, {"kind", "generator"}},
        {{"id", "l"}, {"node", "b"}, {"p_mw", 100.0}, {"kind", "load"}}}},
      {"slack", "b"}};
  return grid_from_json(j);
}

// Equal-reactance triangle, generator at a, load at c (slack c).
inline GridModel triangle_grid(double limit_ab = 100.0, double limit_ac = 100.0,
                               double limit_bc = 100.0,
                               const std::vector<std::string>& outages = {}) {
  json j = {
      {"nodes", {{{"id", "a"}}, {{"id", "b"}}, {{"id", "c"}}}},
      {"branches",
       {{{"id", "ab"}, {"from", "a"}, {"to", "b"}, {"x_pu", 0.2}, {"limit_mw", limit_ab}},
        {{"id", "ac"}, {"from", "a"}, {"to", "c"}, {"x_pu", 0.2}, {"limit_mw", limit_ac}},
        {{"id", "bc"}, {"from", "b"}, {"to", "c"}, {"x_pu", 0.2}, {"limit_mw", limit_bc}}}},
      {"injections",
       {{{"id", "g"}, {"node", "a"}, {"p_mw", 90.0}, {"kind", "generator"}},
        {{"id", "l"}, {"node", "c"}, {"p_mw", 90.0}, {"kind", "load"}}}},
      {"slack", "c"}};
  j["contingencies"] = json::array();
  for (const std::string& b : outages)
    j["contingencies"].push_back({{"id", "o-" + b}, {"branches", {b}}});
  return grid_from_json(j);
}

// 2-busbar station template: every terminal reaches both busbars.
inline json station_json(const std::string& node, const std::vector<std::string>& elements,
                         const std::vector<std::string>& defaults = {}) {
  json st = {{"node", node},
             {"busbars", {"B1", "B2"}},
             {"couplers", json::array({json::array({"B1", "B2"})})},
             {"terminals", json::array()}};
  for (std::size_t i = 0; i < elements.size(); ++i) {
    st["terminals"].push_back({{"element", elements[i]},
                               {"reachable", {"B1", "B2"}},
                               {"default", defaults.empty() ? "B1" : defaults[i]}});
  }
  return st;
}

// Four-node grid with a congested low-limit shortcut: disconnecting "mf"
// clears every violation, so the optimum over single actions has fitness 0.
// Stations at a, m and f give the optimizer splits to explore.
inline GridModel mini_congestion_grid() {
  json j = {
      {"nodes", {{{"id", "a"}}, {{"id", "m"}}, {{"id", "f"}}}},
      {"branches",
       {{{"id", "af"}, {"from", "a"}, {"to", "f"}, {"x_pu", 0.3}, {"limit_mw", 200.0}},
        {{"id", "am"}, {"from", "a"}, {"to", "m"}, {"x_pu", 0.05}, {"limit_mw", 130.0}},
        {{"id", "mf"}, {"from", "m"}, {"to", "f"}, {"x_pu", 0.05}, {"limit_mw", 45.0}},
        {{"id", "mf2"}, {"from", "m"}, {"to", "f"}, {"x_pu", 0.2}, {"limit_mw", 130.0}}}},
      {"injections",
       {{{"id", "g"}, {"node", "a"}, {"p_mw", 100.0}, {"kind", "generator"},
         {"v_setpoint_pu", 1.02}},
        {{"id", "load"}, {"node", "f"}, {"p_mw", 100.0}, {"q_mvar", 20.0},
         {"kind", "load"}}}},
      {"contingencies",
       {{{"id", "o-af"}, {"branches", {"af"}}}, {{"id", "o-am"}, {"branches", {"am"}}}}},
      {"substations",
       json::array({station_json("a", {"af", "am", "g"}),
                    station_json("m", {"am", "mf", "mf2"}),
                    station_json("f", {"af", "mf", "mf2", "load"})})},
      {"slack", "a"}};
  return grid_from_json(j);
}

// --- independent BFS connectivity (oracle-side) -----------------------------

struct OracleEdge {
  int from, to;
  bool active;
};

inline bool oracle_connected(int n_nodes, const std::vector<OracleEdge>& edges) {
  if (n_nodes == 0) return true;
  std::vector<std::vector<int>> adj(n_nodes);
  for (const auto& e : edges) {
    if (!e.active) continue;
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  std::vector<char> seen(n_nodes, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : adj[v])
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        stack.push_back(w);
      }
  }
  return count == n_nodes;
}

inline std::vector<OracleEdge> oracle_edges(const GridModel& grid) {
  std::vector<OracleEdge> edges;
  for (const Branch& b : grid.branches) edges.push_back({b.from, b.to, b.in_service});
  return edges;
}

// Remove each edge in turn and test connectivity.
inline std::set<int> oracle_bridges(int n_nodes, const std::vector<OracleEdge>& edges) {
  std::set<int> bridges;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (!edges[e].active) continue;
    std::vector<OracleEdge> cut = edges;
    cut[e].active = false;
    if (!oracle_connected(n_nodes, cut)) bridges.insert(static_cast<int>(e));
  }
  return bridges;
}

// Double-removal connectivity scan; branches named in any contingency are out.
inline std::set<int> oracle_disconnectables(const GridModel& grid) {
  const int n = static_cast<int>(grid.nodes.size());
  std::vector<OracleEdge> base = oracle_edges(grid);
  std::set<int> in_outage;
  for (const ContingencyCase& c : grid.contingencies)
    for (int e : c.branches) in_outage.insert(e);

  std::set<int> result;
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e) {
    if (!grid.branches[e].in_service || in_outage.count(e)) continue;
    std::vector<OracleEdge> cut = base;
    cut[e].active = false;
    if (!oracle_connected(n, cut)) continue;
    bool safe = true;
    for (const ContingencyCase& c : grid.contingencies) {
      std::vector<OracleEdge> both = cut;
      for (int o : c.branches) both[o].active = false;
      if (!oracle_connected(n, both)) {
        safe = false;
        break;
      }
    }
    if (safe) result.insert(e);
  }
  return result;
}

// --- genome materialization + rebuild oracle --------------------------------

struct ComposedTopology {
  std::vector<std::pair<int, int>> ends;  // per branch, full node ids
  std::vector<char> removed;
  std::vector<int> injection_node;
  int n_new = 0;
};

// Re-derives the bus/branch effect of a genome straight from the action data.
inline ComposedTopology compose_topology(const GridModel& grid,
                                         const ActionSet& actions,
                                         const Genome& genome) {
  ComposedTopology c;
  const int n = static_cast<int>(grid.nodes.size());
  for (const Branch& b : grid.branches) c.ends.emplace_back(b.from, b.to);
  c.removed.assign(grid.branches.size(), 0);
  c.injection_node.resize(grid.injections.size());
  for (int i = 0; i < static_cast<int>(grid.injections.size()); ++i)
    c.injection_node[i] = grid.injections[i].node;

  for (int a : genome.action_slots) {
    if (a < 0) continue;
    const Action& act = actions.actions[a];
    const SubstationDetail& st = grid.substations[act.substation];
    int new_node = n + c.n_new++;
    for (int t = 0; t < static_cast<int>(st.terminals.size()); ++t) {
      if (!act.group[t]) continue;
      const Terminal& term = st.terminals[t];
      if (term.kind == TerminalKind::InjectionTerminal)
        c.injection_node[term.element_index] = new_node;
      else if (term.kind == TerminalKind::BranchFrom)
        c.ends[term.element_index].first = new_node;
      else
        c.ends[term.element_index].second = new_node;
    }
  }
  for (int d : genome.disconnection_slots)
    if (d >= 0) c.removed[actions.disconnectables[d]] = 1;
  return c;
}

struct MaterializedTopology {
  DcGraph graph;                  // base nodes plus one node per split
  Eigen::VectorXd injections;    // length graph.n_nodes, slack-balanced
  std::vector<char> removed;     // per branch
  std::vector<int> injection_node;
};

inline MaterializedTopology materialize(const GridModel& grid, const ActionSet& actions,
                                        const Genome& genome) {
  MaterializedTopology m;
  const int n = static_cast<int>(grid.nodes.size());
  ComposedTopology composed = compose_topology(grid, actions, genome);
  std::vector<std::pair<int, int>>& ends = composed.ends;
  m.removed = composed.removed;
  m.injection_node = composed.injection_node;
  int n_new = composed.n_new;

  // a node that lost all its branches and hosts no injection is a dead
  // busbar, not part of the electrical graph
  std::vector<char> keep(n + n_new, 0);
  keep[grid.slack] = 1;
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e)
    if (grid.branches[e].in_service && !m.removed[e]) {
      keep[ends[e].first] = 1;
      keep[ends[e].second] = 1;
    }
  for (int i = 0; i < static_cast<int>(grid.injections.size()); ++i)
    if (grid.injections[i].net_mw() != 0.0) keep[m.injection_node[i]] = 1;
  std::vector<int> remap(n + n_new, -1);
  int kept = 0;
  for (int v = 0; v < n + n_new; ++v)
    if (keep[v]) remap[v] = kept++;

  m.graph.n_nodes = kept;
  m.graph.slack = remap[grid.slack];
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e) {
    bool active = grid.branches[e].in_service && !m.removed[e];
    int from = active ? remap[ends[e].first] : remap[grid.branches[e].from];
    int to = active ? remap[ends[e].second] : remap[grid.branches[e].to];
    m.graph.edges.push_back(
        {std::max(from, 0), std::max(to, 0), 1.0 / grid.branches[e].reactance, active});
  }
  for (int& node : m.injection_node) node = remap[node];

  m.injections = Eigen::VectorXd::Zero(m.graph.n_nodes);
  for (int i = 0; i < static_cast<int>(grid.injections.size()); ++i)
    if (m.injection_node[i] >= 0)
      m.injections[m.injection_node[i]] += grid.injections[i].net_mw();
  m.injections[m.graph.slack] -= m.injections.sum();
  return m;
}

// Reference flows by full PTDF rebuild; throws SingularSystem on islanding.
inline Eigen::VectorXd rebuild_flows(const MaterializedTopology& m) {
  PTDFMatrix ptdf = build_ptdf(m.graph);
  return ptdf.sensitivities * m.injections;
}

// Reference flows through the angle formulation (direct linear solve).
inline Eigen::VectorXd angle_flows(const DcGraph& graph, const Eigen::VectorXd& p) {
  const int n = graph.n_nodes;
  std::vector<int> red(n, -1);
  for (int v = 0, r = 0; v < n; ++v)
    if (v != graph.slack) red[v] = r++;
  Eigen::MatrixXd b_mat = Eigen::MatrixXd::Zero(n - 1, n - 1);
  Eigen::VectorXd rhs(n - 1);
  for (int v = 0; v < n; ++v)
    if (red[v] >= 0) rhs[red[v]] = p[v];
  for (const auto& e : graph.edges) {
    if (!e.in_service) continue;
    int i = red[e.from], j = red[e.to];
    if (i >= 0) b_mat(i, i) += e.susceptance;
    if (j >= 0) b_mat(j, j) += e.susceptance;
    if (i >= 0 && j >= 0) {
      b_mat(i, j) -= e.susceptance;
      b_mat(j, i) -= e.susceptance;
    }
  }
  Eigen::VectorXd theta = b_mat.fullPivLu().solve(rhs);
  Eigen::VectorXd flows = Eigen::VectorXd::Zero(graph.edges.size());
  for (int e = 0; e < static_cast<int>(graph.edges.size()); ++e) {
    const auto& edge = graph.edges[e];
    if (!edge.in_service) continue;
    double ti = red[edge.from] >= 0 ? theta[red[edge.from]] : 0.0;
    double tj = red[edge.to] >= 0 ? theta[red[edge.to]] : 0.0;
    flows[e] = edge.susceptance * (ti - tj);
  }
  return flows;
}

// Post-outage flows for a genome topology, rebuilt from scratch: compose the
// topology, knock out the case's elements, classify components (dead busbars
// are dropped, anything live must stay with the slack), then angle-solve.
// Returns nothing when the case islands live equipment.
inline std::optional<Eigen::VectorXd> scratch_outage_flows(
    const GridModel& grid, const ActionSet& actions, const Genome& genome,
    const std::vector<int>& branches_out, const std::vector<int>& injections_out) {
  ComposedTopology c = compose_topology(grid, actions, genome);
  for (int e : branches_out) c.removed[e] = 1;
  std::vector<char> omitted(grid.injections.size(), 0);
  for (int i : injections_out) omitted[i] = 1;

  const int n_total = static_cast<int>(grid.nodes.size()) + c.n_new;
  std::vector<char> active(grid.branches.size(), 0);
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e)
    active[e] = grid.branches[e].in_service && !c.removed[e];

  std::vector<char> has_branch(n_total, 0);
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e)
    if (active[e]) {
      has_branch[c.ends[e].first] = 1;
      has_branch[c.ends[e].second] = 1;
    }
  std::vector<char> hosting(has_branch);
  for (int i = 0; i < static_cast<int>(grid.injections.size()); ++i)
    if (!omitted[i] && grid.injections[i].net_mw() != 0.0)
      hosting[c.injection_node[i]] = 1;

  // slack-side component via plain BFS
  std::vector<std::vector<int>> adj(n_total);
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e)
    if (active[e]) {
      adj[c.ends[e].first].push_back(c.ends[e].second);
      adj[c.ends[e].second].push_back(c.ends[e].first);
    }
  std::vector<char> with_slack(n_total, 0);
  std::vector<int> stack{grid.slack};
  with_slack[grid.slack] = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : adj[v])
      if (!with_slack[w]) {
        with_slack[w] = 1;
        stack.push_back(w);
      }
  }
  for (int v = 0; v < n_total; ++v)
    if (hosting[v] && !with_slack[v]) return std::nullopt;

  // compact to the live slack-side graph and angle-solve
  std::vector<int> remap(n_total, -1);
  int kept = 0;
  for (int v = 0; v < n_total; ++v)
    if (with_slack[v]) remap[v] = kept++;
  DcGraph g;
  g.n_nodes = kept;
  g.slack = remap[grid.slack];
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e) {
    bool in = active[e] && with_slack[c.ends[e].first];
    g.edges.push_back({in ? remap[c.ends[e].first] : 0, in ? remap[c.ends[e].second] : 0,
                       1.0 / grid.branches[e].reactance, in});
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(kept);
  for (int i = 0; i < static_cast<int>(grid.injections.size()); ++i) {
    if (omitted[i] || remap[c.injection_node[i]] < 0) continue;
    p[remap[c.injection_node[i]]] += grid.injections[i].net_mw();
  }
  p[g.slack] -= p.sum();

  Eigen::VectorXd flows = angle_flows(g, p);
  return flows;
}

// Brute-force implied branch set for a busbar outage under a genome: walk the
// coupler graph minus the opened couplers from the failed busbar, then gather
// the in-service branch terminals assigned to that group.
inline std::vector<int> scratch_implied_branches(const GridModel& grid,
                                                 const ActionSet& actions,
                                                 const Genome& genome,
                                                 const BusbarOutage& outage) {
  const SubstationDetail& st = grid.substations[outage.substation];
  const Action* applied = nullptr;
  for (int a : genome.action_slots)
    if (a >= 0 && actions.actions[a].substation == outage.substation)
      applied = &actions.actions[a];

  std::set<int> open;
  if (applied)
    open.insert(applied->open_couplers.begin(), applied->open_couplers.end());

  std::set<int> group{st.busbar_index(outage.busbar)};
  bool grew = true;
  while (grew) {
    grew = false;
    for (int cp = 0; cp < static_cast<int>(st.couplers.size()); ++cp) {
      if (open.count(cp)) continue;
      int a = st.busbar_index(st.couplers[cp].first);
      int b = st.busbar_index(st.couplers[cp].second);
      if (group.count(a) && !group.count(b)) group.insert(b), grew = true;
      if (group.count(b) && !group.count(a)) group.insert(a), grew = true;
    }
  }

  std::vector<int> implied;
  for (int t = 0; t < static_cast<int>(st.terminals.size()); ++t) {
    const Terminal& term = st.terminals[t];
    if (term.kind == TerminalKind::InjectionTerminal) continue;
    if (!grid.branches[term.element_index].in_service) continue;
    int assigned = applied ? applied->busbar_assignment[t]
                           : st.busbar_index(term.default_busbar);
    if (group.count(assigned)) implied.push_back(term.element_index);
  }
  std::sort(implied.begin(), implied.end());
  implied.erase(std::unique(implied.begin(), implied.end()), implied.end());
  return implied;
}

// --- random fixtures ---------------------------------------------------------

struct RandomGridOptions {
  int n_nodes = 20;
  int extra_edges = 10;
  int n_outages = 5;
  int n_stations = 2;
  bool multi_branch_outages = false;
  bool injection_outages = false;
  bool busbar_outages = false;
};

inline GridModel random_grid(std::uint64_t seed, RandomGridOptions opt = {}) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };

  const int n = opt.n_nodes;
  json j;
  j["nodes"] = json::array();
  for (int v = 0; v < n; ++v) j["nodes"].push_back({{"id", "n" + std::to_string(v)}});

  std::vector<std::pair<int, int>> edge_list;
  for (int v = 1; v < n; ++v) edge_list.emplace_back(pick(v), v);
  for (int k = 0; k < opt.extra_edges; ++k) {
    int a = pick(n), b = pick(n);
    if (a == b) continue;
    edge_list.emplace_back(a, b);
  }
  j["branches"] = json::array();
  for (std::size_t e = 0; e < edge_list.size(); ++e) {
    j["branches"].push_back({{"id", "e" + std::to_string(e)},
                             {"from", "n" + std::to_string(edge_list[e].first)},
                             {"to", "n" + std::to_string(edge_list[e].second)},
                             {"x_pu", uniform(0.05, 0.5)},
                             {"limit_mw", uniform(80.0, 400.0)}});
  }

  j["injections"] = json::array();
  int n_gens = std::max(1, n / 5);
  std::set<int> gen_nodes;
  while (static_cast<int>(gen_nodes.size()) < n_gens) gen_nodes.insert(pick(n));
  for (int g : gen_nodes)
    j["injections"].push_back({{"id", "g" + std::to_string(g)},
                               {"node", "n" + std::to_string(g)},
                               {"p_mw", uniform(50.0, 250.0)},
                               {"q_mvar", uniform(-20.0, 40.0)},
                               {"kind", "generator"},
                               {"v_setpoint_pu", uniform(0.99, 1.05)}});
  int loads = 0;
  for (int v = 0; v < n; ++v) {
    if (gen_nodes.count(v)) continue;
    if (loads > 0 && uniform(0.0, 1.0) < 0.4) continue;
    j["injections"].push_back({{"id", "l" + std::to_string(v)},
                               {"node", "n" + std::to_string(v)},
                               {"p_mw", uniform(10.0, 90.0)},
                               {"q_mvar", uniform(0.0, 30.0)},
                               {"kind", "load"}});
    ++loads;
  }
  j["slack"] = "n" + std::to_string(*gen_nodes.begin());

  // contingencies: random branch subsets that keep the grid connected,
  // optionally with an injection loss folded in
  std::vector<OracleEdge> edges;
  for (const auto& [a, b] : edge_list) edges.push_back({a, b, true});
  j["contingencies"] = json::array();
  int placed = 0;
  for (int tries = 0; tries < 20 * opt.n_outages && placed < opt.n_outages; ++tries) {
    std::set<int> out{pick(static_cast<int>(edge_list.size()))};
    if (opt.multi_branch_outages && uniform(0.0, 1.0) < 0.3)
      out.insert(pick(static_cast<int>(edge_list.size())));
    if (opt.injection_outages && uniform(0.0, 1.0) < 0.3) out.clear();  // injection only
    std::vector<OracleEdge> cut = edges;
    for (int e : out) cut[e].active = false;
    if (!oracle_connected(n, cut)) continue;
    json jc = {{"id", "o" + std::to_string(placed)}, {"branches", json::array()}};
    for (int e : out) jc["branches"].push_back("e" + std::to_string(e));
    if (opt.injection_outages && uniform(0.0, 1.0) < 0.5) {
      const json& inj = j["injections"][pick(static_cast<int>(j["injections"].size()))];
      jc["injections"] = json::array({inj.at("id")});
    }
    if (out.empty() && (!jc.contains("injections") || jc["injections"].empty()))
      continue;
    j["contingencies"].push_back(jc);
    ++placed;
  }

  // stations on well-connected nodes
  j["substations"] = json::array();
  std::vector<int> degree(n, 0);
  for (const auto& [a, b] : edge_list) {
    ++degree[a];
    ++degree[b];
  }
  int stations = 0;
  for (int v = 0; v < n && stations < opt.n_stations; ++v) {
    if (degree[v] < 3) continue;
    std::vector<std::string> elements;
    for (std::size_t e = 0; e < edge_list.size(); ++e)
      if (edge_list[e].first == v || edge_list[e].second == v)
        elements.push_back("e" + std::to_string(e));
    for (const json& ji : j["injections"])
      if (ji.at("node") == "n" + std::to_string(v))
        elements.push_back(ji.at("id").get<std::string>());
    std::vector<std::string> defaults;
    for (std::size_t k = 0; k < elements.size(); ++k)
      defaults.push_back(pick(2) ? "B2" : "B1");
    j["substations"].push_back(
        station_json("n" + std::to_string(v), elements, defaults));
    if (opt.busbar_outages) {
      j["busbar_outages"].push_back({{"id", "bo" + std::to_string(stations)},
                                     {"substation", "n" + std::to_string(v)},
                                     {"busbar", pick(2) ? "B2" : "B1"}});
    }
    ++stations;
  }
  return grid_from_json(j);
}

inline Genome random_genome(const ActionSet& actions, int n_a, int n_d,
                            std::mt19937_64& rng) {
  Genome g = Genome::empty(n_a, n_d);
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  if (!actions.actions.empty()) {
    int want = pick(n_a + 1);
    std::set<int> stations;
    for (int slot = 0; slot < want; ++slot) {
      for (int tries = 0; tries < 20; ++tries) {
        int a = pick(static_cast<int>(actions.actions.size()));
        if (stations.insert(actions.substation_of(a)).second) {
          g.action_slots[slot] = a;
          break;
        }
      }
    }
  }
  if (!actions.disconnectables.empty()) {
    int want = pick(n_d + 1);
    std::set<int> used;
    for (int slot = 0; slot < want; ++slot) {
      int d = pick(static_cast<int>(actions.disconnectables.size()));
      if (used.insert(d).second) g.disconnection_slots[slot] = d;
    }
  }
  return g;
}

}  // namespace topopt::testing
