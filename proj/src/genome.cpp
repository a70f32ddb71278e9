#include "topopt/genome.hpp"

#include <algorithm>
#include <set>

#include "topopt/importer.hpp"

namespace topopt {

bool Genome::is_empty() const {
  return split_count() == 0 && disconnection_count() == 0;
}

int Genome::split_count() const {
  return static_cast<int>(std::count_if(action_slots.begin(), action_slots.end(),
                                        [](int a) { return a >= 0; }));
}

int Genome::disconnection_count() const {
  return static_cast<int>(std::count_if(disconnection_slots.begin(),
                                        disconnection_slots.end(),
                                        [](int d) { return d >= 0; }));
}

std::vector<int> Genome::action_ids() const {
  std::vector<int> ids;
  for (int a : action_slots)
    if (a >= 0) ids.push_back(a);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<int> Genome::disconnection_ids() const {
  std::vector<int> ids;
  for (int d : disconnection_slots)
    if (d >= 0) ids.push_back(d);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string Genome::canonical_key() const {
  std::string key = "a:";
  for (int a : action_ids()) key += std::to_string(a) + ",";
  key += "d:";
  for (int d : disconnection_ids()) key += std::to_string(d) + ",";
  return key;
}

bool genome_valid(const Genome& g, const ActionSet& actions) {
  std::set<int> substations;
  for (int a : g.action_slots) {
    if (a < 0) continue;
    if (a >= static_cast<int>(actions.actions.size())) return false;
    if (!substations.insert(actions.substation_of(a)).second) return false;
  }
  std::set<int> branches;
  for (int d : g.disconnection_slots) {
    if (d < 0) continue;
    if (d >= static_cast<int>(actions.disconnectables.size())) return false;
    if (!branches.insert(actions.disconnectables[d]).second) return false;
  }
  return true;
}

int genome_distance(const Genome& a, const Genome& b) {
  auto sym_diff = [](const std::vector<int>& x, const std::vector<int>& y) {
    std::vector<int> out;
    std::set_symmetric_difference(x.begin(), x.end(), y.begin(), y.end(),
                                  std::back_inserter(out));
    return static_cast<int>(out.size());
  };
  return sym_diff(a.action_ids(), b.action_ids()) +
         sym_diff(a.disconnection_ids(), b.disconnection_ids());
}

AppliedTopology apply_genome(const GridModel& grid, const ActionSet& actions,
                             const Genome& genome) {
  AppliedTopology t;
  const int n = static_cast<int>(grid.nodes.size());
  t.endpoints.reserve(grid.branches.size());
  for (const Branch& b : grid.branches) t.endpoints.emplace_back(b.from, b.to);
  t.removed.assign(grid.branches.size(), 0);
  t.injection_node.resize(grid.injections.size());
  for (int i = 0; i < static_cast<int>(grid.injections.size()); ++i)
    t.injection_node[i] = grid.injections[i].node;
  t.action_of_station.assign(grid.substations.size(), -1);

  for (int d : genome.disconnection_slots)
    if (d >= 0) t.removed[actions.disconnectables[d]] = 1;

  for (int a : genome.action_slots) {
    if (a < 0) continue;
    const Action& act = actions.actions[a];
    const SubstationDetail& st = grid.substations[act.substation];
    const int new_node = n + t.n_new_nodes;
    for (int term = 0; term < static_cast<int>(st.terminals.size()); ++term) {
      if (!act.group[term]) continue;
      const Terminal& terminal = st.terminals[term];
      if (terminal.kind == TerminalKind::InjectionTerminal)
        t.injection_node[terminal.element_index] = new_node;
      else if (terminal.kind == TerminalKind::BranchFrom)
        t.endpoints[terminal.element_index].first = new_node;
      else
        t.endpoints[terminal.element_index].second = new_node;
    }
    t.action_of_station[act.substation] = a;
    ++t.n_new_nodes;
  }
  return t;
}

}  // namespace topopt
