#include "topopt/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "topopt/graph_utils.hpp"

namespace topopt {

using json = nlohmann::ordered_json;

int SubstationDetail::busbar_index(const std::string& b) const {
  for (int i = 0; i < static_cast<int>(busbars.size()); ++i)
    if (busbars[i] == b) return i;
  return -1;
}

int GridModel::node_index(const std::string& id) const {
  auto it = node_ids_.find(id);
  return it == node_ids_.end() ? -1 : it->second;
}

int GridModel::branch_index(const std::string& id) const {
  auto it = branch_ids_.find(id);
  return it == branch_ids_.end() ? -1 : it->second;
}

int GridModel::injection_index(const std::string& id) const {
  auto it = injection_ids_.find(id);
  return it == injection_ids_.end() ? -1 : it->second;
}

void GridModel::rebuild_indices() {
  node_ids_.clear();
  branch_ids_.clear();
  injection_ids_.clear();
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    if (!node_ids_.emplace(nodes[i].id, i).second)
      throw ValidationError("duplicate node id '" + nodes[i].id + "'");
  }
  for (int i = 0; i < static_cast<int>(branches.size()); ++i) {
    if (!branch_ids_.emplace(branches[i].id, i).second)
      throw ValidationError("duplicate branch id '" + branches[i].id + "'");
  }
  for (int i = 0; i < static_cast<int>(injections.size()); ++i) {
    if (!injection_ids_.emplace(injections[i].id, i).second)
      throw ValidationError("duplicate injection id '" + injections[i].id + "'");
  }
  adjacency_.assign(nodes.size(), {});
  for (int e = 0; e < static_cast<int>(branches.size()); ++e) {
    adjacency_[branches[e].from].push_back(e);
    adjacency_[branches[e].to].push_back(e);
  }
  substation_of_node_.assign(nodes.size(), -1);
  switchable_nodes_.clear();
  for (int s = 0; s < static_cast<int>(substations.size()); ++s) {
    substation_of_node_[substations[s].node] = s;
    switchable_nodes_.push_back(substations[s].node);
  }
  std::sort(switchable_nodes_.begin(), switchable_nodes_.end());
}

namespace {

std::vector<GraphEdge> as_graph(const GridModel& grid) {
  std::vector<GraphEdge> edges;
  edges.reserve(grid.branches.size());
  for (const Branch& b : grid.branches)
    edges.push_back({b.from, b.to, b.in_service});
  return edges;
}

}  // namespace

void GridModel::validate() const {
  for (const Branch& b : branches) {
    if (b.from < 0 || b.from >= static_cast<int>(nodes.size()) || b.to < 0 ||
        b.to >= static_cast<int>(nodes.size()))
      throw ValidationError("branch '" + b.id + "' references an unknown node");
    if (b.from == b.to)
      throw ValidationError("branch '" + b.id + "' connects a node to itself");
    if (!(b.reactance > 0.0))
      throw ValidationError("branch '" + b.id + "' has non-positive reactance");
    if (!(b.flow_limit > 0.0))
      throw ValidationError("branch '" + b.id + "' has non-positive flow limit");
  }
  for (const Injection& inj : injections) {
    if (inj.node < 0 || inj.node >= static_cast<int>(nodes.size()))
      throw ValidationError("injection '" + inj.id + "' references an unknown node");
    if (inj.kind == InjectionKind::Load && inj.v_setpoint_pu)
      throw ValidationError("load '" + inj.id + "' carries a voltage setpoint");
    if (inj.v_setpoint_pu && !(*inj.v_setpoint_pu > 0.0))
      throw ValidationError("generator '" + inj.id + "' has a non-positive voltage setpoint");
  }
  if (slack < 0 || slack >= static_cast<int>(nodes.size()))
    throw ValidationError("slack node is missing");

  std::vector<GraphEdge> edges = as_graph(*this);
  std::vector<int> all_nodes(nodes.size());
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) all_nodes[i] = i;
  if (!graph_connected(static_cast<int>(nodes.size()), edges, all_nodes))
    throw ValidationError("grid is disconnected in the base case");

  for (const ContingencyCase& c : contingencies) {
    if (c.branches.empty() && c.injections.empty())
      throw ValidationError("contingency '" + c.id + "' removes nothing");
    for (int e : c.branches)
      if (e < 0 || e >= static_cast<int>(branches.size()))
        throw ValidationError("contingency '" + c.id + "' references an unknown branch");
    for (int i : c.injections)
      if (i < 0 || i >= static_cast<int>(injections.size()))
        throw ValidationError("contingency '" + c.id + "' references an unknown injection");
    if (!graph_connected_without(static_cast<int>(nodes.size()), edges, c.branches,
                                 all_nodes))
      throw IslandedContingency("contingency '" + c.id +
                                "' disconnects the base-case grid");
  }

  for (const SubstationDetail& st : substations) {
    const std::string& where = nodes[st.node].id;
    if (st.busbars.size() < 2)
      throw ValidationError("substation at node '" + where + "' needs at least 2 busbars");
    for (const auto& [a, b] : st.couplers)
      if (st.busbar_index(a) < 0 || st.busbar_index(b) < 0)
        throw ValidationError("substation at node '" + where +
                              "' has a coupler on an unknown busbar");
    // coupler graph must be connected with every coupler closed
    std::vector<GraphEdge> cg;
    for (const auto& [a, b] : st.couplers)
      cg.push_back({st.busbar_index(a), st.busbar_index(b), true});
    std::vector<int> all_busbars(st.busbars.size());
    for (int i = 0; i < static_cast<int>(st.busbars.size()); ++i) all_busbars[i] = i;
    if (!graph_connected(static_cast<int>(st.busbars.size()), cg, all_busbars))
      throw ValidationError("substation at node '" + where +
                            "' has a disconnected coupler graph");

    std::size_t expected = 0;
    for (int e : branches_at(st.node)) {
      (void)e;
      ++expected;
    }
    for (const Injection& inj : injections)
      if (inj.node == st.node) ++expected;
    if (expected != st.terminals.size())
      throw ValidationError("substation at node '" + where + "' lists " +
                            std::to_string(st.terminals.size()) + " terminals, expected " +
                            std::to_string(expected));

    for (const Terminal& t : st.terminals) {
      if (t.reachable.empty())
        throw ValidationError("terminal '" + t.element + "' at node '" + where +
                              "' reaches no busbar");
      for (const std::string& b : t.reachable)
        if (st.busbar_index(b) < 0)
          throw ValidationError("terminal '" + t.element + "' at node '" + where +
                                "' reaches an unknown busbar");
      if (std::find(t.reachable.begin(), t.reachable.end(), t.default_busbar) ==
          t.reachable.end())
        throw ValidationError("terminal '" + t.element + "' at node '" + where +
                              "' defaults to an unreachable busbar");
      if (t.kind == TerminalKind::InjectionTerminal) {
        if (t.element_index < 0 || injections[t.element_index].node != st.node)
          throw ValidationError("terminal '" + t.element + "' at node '" + where +
                                "' does not match an injection at this node");
      } else {
        const Branch& b = branches[t.element_index];
        int end = t.kind == TerminalKind::BranchFrom ? b.from : b.to;
        if (end != st.node)
          throw ValidationError("terminal '" + t.element + "' at node '" + where +
                                "' does not match a branch end at this node");
      }
    }
  }

  for (const BusbarOutage& bo : busbar_outages) {
    if (bo.substation < 0 || bo.substation >= static_cast<int>(substations.size()))
      throw ValidationError("busbar outage '" + bo.id + "' references an unknown substation");
    if (substations[bo.substation].busbar_index(bo.busbar) < 0)
      throw ValidationError("busbar outage '" + bo.id + "' references an unknown busbar");
  }
}

std::vector<int> GridModel::busbar_group(const SubstationDetail& detail, int busbar,
                                         const std::vector<int>& open_couplers) const {
  std::vector<GraphEdge> cg;
  for (int c = 0; c < static_cast<int>(detail.couplers.size()); ++c) {
    bool open = std::find(open_couplers.begin(), open_couplers.end(), c) !=
                open_couplers.end();
    cg.push_back({detail.busbar_index(detail.couplers[c].first),
                  detail.busbar_index(detail.couplers[c].second), !open});
  }
  // BFS over closed couplers
  std::vector<char> seen(detail.busbars.size(), 0);
  std::vector<int> stack{busbar}, group;
  seen[busbar] = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    group.push_back(v);
    for (const GraphEdge& e : cg) {
      if (!e.active) continue;
      int w = e.from == v ? e.to : (e.to == v ? e.from : -1);
      if (w >= 0 && !seen[w]) {
        seen[w] = 1;
        stack.push_back(w);
      }
    }
  }
  std::sort(group.begin(), group.end());
  return group;
}

std::vector<int> GridModel::implied_branches(const BusbarOutage& outage) const {
  const SubstationDetail& st = substations[outage.substation];
  std::vector<int> defaults(st.terminals.size());
  for (int t = 0; t < static_cast<int>(st.terminals.size()); ++t)
    defaults[t] = st.busbar_index(st.terminals[t].default_busbar);
  return implied_branches(outage, defaults, {});
}

std::vector<int> GridModel::implied_branches(const BusbarOutage& outage,
                                             const std::vector<int>& terminal_busbars,
                                             const std::vector<int>& open_couplers) const {
  const SubstationDetail& st = substations[outage.substation];
  std::vector<int> group =
      busbar_group(st, st.busbar_index(outage.busbar), open_couplers);
  std::vector<int> implied;
  for (int t = 0; t < static_cast<int>(st.terminals.size()); ++t) {
    const Terminal& term = st.terminals[t];
    if (term.kind == TerminalKind::InjectionTerminal) continue;
    if (!branches[term.element_index].in_service) continue;
    if (std::binary_search(group.begin(), group.end(), terminal_busbars[t]))
      implied.push_back(term.element_index);
  }
  std::sort(implied.begin(), implied.end());
  implied.erase(std::unique(implied.begin(), implied.end()), implied.end());
  return implied;
}

namespace {

template <typename T>
T require(const json& j, const char* key, const std::string& what) {
  if (!j.contains(key))
    throw ParseError(what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(what + ": field '" + key + "' has the wrong type");
  }
}

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw ParseError(what + ": non-finite number");
}

}  // namespace

GridModel grid_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }

  GridModel grid;
  if (!doc.contains("nodes") || !doc.contains("branches"))
    throw ParseError("grid file: missing 'nodes' or 'branches'");

  for (const json& jn : doc.at("nodes")) {
    Node n;
    n.id = require<std::string>(jn, "id", "node");
    n.substation = jn.value("substation", std::string{});
    n.shunt_b_pu = jn.value("shunt_b_pu", 0.0);
    check_finite(n.shunt_b_pu, "node '" + n.id + "'");
    grid.nodes.push_back(std::move(n));
  }
  std::unordered_map<std::string, int> node_ids;
  for (int i = 0; i < static_cast<int>(grid.nodes.size()); ++i)
    node_ids[grid.nodes[i].id] = i;
  auto node_of = [&](const std::string& id, const std::string& what) {
    auto it = node_ids.find(id);
    if (it == node_ids.end())
      throw ValidationError(what + " references unknown node '" + id + "'");
    return it->second;
  };

  for (const json& jb : doc.at("branches")) {
    Branch b;
    b.id = require<std::string>(jb, "id", "branch");
    const std::string what = "branch '" + b.id + "'";
    b.from = node_of(require<std::string>(jb, "from", what), what);
    b.to = node_of(require<std::string>(jb, "to", what), what);
    b.reactance = require<double>(jb, "x_pu", what);
    b.flow_limit = require<double>(jb, "limit_mw", what);
    b.resistance = jb.value("r_pu", 0.0);
    b.charging_b = jb.value("b_pu", 0.0);
    b.tap = jb.value("tap", 1.0);
    b.in_service = jb.value("in_service", true);
    check_finite(b.reactance, what);
    check_finite(b.flow_limit, what);
    check_finite(b.resistance, what);
    check_finite(b.charging_b, what);
    check_finite(b.tap, what);
    grid.branches.push_back(std::move(b));
  }

  for (const json& ji : doc.value("injections", json::array())) {
    Injection inj;
    inj.id = require<std::string>(ji, "id", "injection");
    const std::string what = "injection '" + inj.id + "'";
    inj.node = node_of(require<std::string>(ji, "node", what), what);
    inj.p_mw = require<double>(ji, "p_mw", what);
    inj.q_mvar = ji.value("q_mvar", 0.0);
    std::string kind = require<std::string>(ji, "kind", what);
    if (kind == "generator")
      inj.kind = InjectionKind::Generator;
    else if (kind == "load")
      inj.kind = InjectionKind::Load;
    else
      throw ParseError(what + ": kind must be 'generator' or 'load'");
    if (ji.contains("v_setpoint_pu"))
      inj.v_setpoint_pu = ji.at("v_setpoint_pu").get<double>();
    check_finite(inj.p_mw, what);
    check_finite(inj.q_mvar, what);
    grid.injections.push_back(std::move(inj));
  }

  grid.rebuild_indices();

  for (const json& js : doc.value("substations", json::array())) {
    SubstationDetail st;
    const std::string node_id = require<std::string>(js, "node", "substation");
    const std::string what = "substation at node '" + node_id + "'";
    st.node = node_of(node_id, what);
    st.busbars = require<std::vector<std::string>>(js, "busbars", what);
    for (const json& jc : js.value("couplers", json::array())) {
      if (!jc.is_array() || jc.size() != 2)
        throw ParseError(what + ": coupler entries must be [busbar, busbar] pairs");
      st.couplers.emplace_back(jc.at(0).get<std::string>(), jc.at(1).get<std::string>());
    }
    for (const json& jt : js.value("terminals", json::array())) {
      Terminal t;
      t.element = require<std::string>(jt, "element", what);
      t.reachable = require<std::vector<std::string>>(jt, "reachable", what);
      t.default_busbar = require<std::string>(jt, "default", what);
      int bi = grid.branch_index(t.element);
      if (bi >= 0) {
        const Branch& b = grid.branches[bi];
        t.element_index = bi;
        if (b.from == st.node)
          t.kind = TerminalKind::BranchFrom;
        else if (b.to == st.node)
          t.kind = TerminalKind::BranchTo;
        else
          throw ValidationError(what + ": terminal '" + t.element +
                                "' is a branch that does not end here");
      } else {
        int ii = grid.injection_index(t.element);
        if (ii < 0)
          throw ValidationError(what + ": terminal '" + t.element +
                                "' matches no branch or injection");
        t.kind = TerminalKind::InjectionTerminal;
        t.element_index = ii;
      }
      st.terminals.push_back(std::move(t));
    }
    grid.substations.push_back(std::move(st));
  }

  for (const json& jc : doc.value("contingencies", json::array())) {
    ContingencyCase c;
    c.id = require<std::string>(jc, "id", "contingency");
    const std::string what = "contingency '" + c.id + "'";
    for (const json& jb : jc.value("branches", json::array())) {
      int e = grid.branch_index(jb.get<std::string>());
      if (e < 0) throw ValidationError(what + " references an unknown branch");
      c.branches.push_back(e);
    }
    for (const json& ji : jc.value("injections", json::array())) {
      int i = grid.injection_index(ji.get<std::string>());
      if (i < 0) throw ValidationError(what + " references an unknown injection");
      c.injections.push_back(i);
    }
    grid.contingencies.push_back(std::move(c));
  }

  grid.rebuild_indices();

  for (const json& jb : doc.value("busbar_outages", json::array())) {
    BusbarOutage bo;
    bo.id = require<std::string>(jb, "id", "busbar outage");
    const std::string what = "busbar outage '" + bo.id + "'";
    const std::string node_id = require<std::string>(jb, "substation", what);
    int node = node_of(node_id, what);
    bo.substation = grid.substation_at(node);
    if (bo.substation < 0)
      throw ValidationError(what + ": node '" + node_id + "' has no substation detail");
    bo.busbar = require<std::string>(jb, "busbar", what);
    grid.busbar_outages.push_back(std::move(bo));
  }

  if (!doc.contains("slack")) throw ParseError("grid file: missing 'slack'");
  grid.slack = node_of(doc.at("slack").get<std::string>(), "slack");

  grid.validate();
  return grid;
}

GridModel load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return grid_from_json_text(buf.str());
}

std::string grid_to_json_text(const GridModel& grid) {
  json doc;
  doc["nodes"] = json::array();
  for (const Node& n : grid.nodes) {
    json jn{{"id", n.id}};
    if (!n.substation.empty()) jn["substation"] = n.substation;
    if (n.shunt_b_pu != 0.0) jn["shunt_b_pu"] = n.shunt_b_pu;
    doc["nodes"].push_back(jn);
  }
  doc["branches"] = json::array();
  for (const Branch& b : grid.branches) {
    json jb{{"id", b.id},
            {"from", grid.nodes[b.from].id},
            {"to", grid.nodes[b.to].id},
            {"x_pu", b.reactance},
            {"limit_mw", b.flow_limit}};
    if (b.resistance != 0.0) jb["r_pu"] = b.resistance;
    if (b.charging_b != 0.0) jb["b_pu"] = b.charging_b;
    if (b.tap != 1.0) jb["tap"] = b.tap;
    if (!b.in_service) jb["in_service"] = false;
    doc["branches"].push_back(jb);
  }
  doc["injections"] = json::array();
  for (const Injection& inj : grid.injections) {
    json ji{{"id", inj.id},
            {"node", grid.nodes[inj.node].id},
            {"p_mw", inj.p_mw},
            {"q_mvar", inj.q_mvar},
            {"kind", inj.kind == InjectionKind::Generator ? "generator" : "load"}};
    if (inj.v_setpoint_pu) ji["v_setpoint_pu"] = *inj.v_setpoint_pu;
    doc["injections"].push_back(ji);
  }
  doc["contingencies"] = json::array();
  for (const ContingencyCase& c : grid.contingencies) {
    json jc{{"id", c.id}};
    jc["branches"] = json::array();
    for (int e : c.branches) jc["branches"].push_back(grid.branches[e].id);
    jc["injections"] = json::array();
    for (int i : c.injections) jc["injections"].push_back(grid.injections[i].id);
    doc["contingencies"].push_back(jc);
  }
  doc["busbar_outages"] = json::array();
  for (const BusbarOutage& bo : grid.busbar_outages) {
    doc["busbar_outages"].push_back(
        json{{"id", bo.id},
             {"substation", grid.nodes[grid.substations[bo.substation].node].id},
             {"busbar", bo.busbar}});
  }
  doc["substations"] = json::array();
  for (const SubstationDetail& st : grid.substations) {
    json js{{"node", grid.nodes[st.node].id}, {"busbars", st.busbars}};
    js["couplers"] = json::array();
    for (const auto& [a, b] : st.couplers) js["couplers"].push_back(json::array({a, b}));
    js["terminals"] = json::array();
    for (const Terminal& t : st.terminals) {
      js["terminals"].push_back(json{{"element", t.element},
                                     {"reachable", t.reachable},
                                     {"default", t.default_busbar}});
    }
    doc["substations"].push_back(js);
  }
  doc["slack"] = grid.nodes[grid.slack].id;
  return doc.dump(2);
}

void save_grid(const GridModel& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write grid file '" + path.string() + "'");
  out << grid_to_json_text(grid) << "\n";
}

std::uint64_t grid_content_hash(const GridModel& grid) {
  // FNV-1a over the canonical serialization
  std::string text = grid_to_json_text(grid);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Eigen::VectorXd base_power_vector(const GridModel& grid) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(grid.nodes.size());
  for (const Injection& inj : grid.injections) p[inj.node] += inj.net_mw();
  p[grid.slack] -= p.sum();
  return p;
}

}  // namespace topopt
