#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "topopt/errors.hpp"

namespace topopt {

enum class InjectionKind { Generator, Load };

struct Node {
  std::string id;
  std::string substation;   // physical substation label, may be empty
  double shunt_b_pu = 0.0;  // fixed bus shunt, AC model only
};

struct Branch {
  std::string id;
  int from = -1;
  int to = -1;
  double reactance = 0.0;   // series x in per unit, > 0
  double resistance = 0.0;  // series r in per unit, AC model only
  double charging_b = 0.0;  // total line charging susceptance, AC model only
  double tap = 1.0;         // off-nominal ratio on the from side, AC model only
  double flow_limit = 0.0;  // MW limit for DC screening, MVA for AC
  bool in_service = true;
};

struct Injection {
  std::string id;
  int node = -1;
  double p_mw = 0.0;  // consumption for loads, output for generators
  double q_mvar = 0.0;
  InjectionKind kind = InjectionKind::Load;
  std::optional<double> v_setpoint_pu;  // generators only

  // Signed contribution to the nodal power vector.
  double net_mw() const { return kind == InjectionKind::Generator ? p_mw : -p_mw; }
};

struct ContingencyCase {
  std::string id;
  std::vector<int> branches;    // branch indices removed by this case
  std::vector<int> injections;  // injection indices removed by this case
};

struct BusbarOutage {
  std::string id;
  int substation = -1;  // index into GridModel::substations
  std::string busbar;
};

enum class TerminalKind { BranchFrom, BranchTo, InjectionTerminal };

struct Terminal {
  std::string element;  // external id of the branch or injection
  TerminalKind kind = TerminalKind::InjectionTerminal;
  int element_index = -1;
  std::vector<std::string> reachable;  // busbars reachable through disconnectors
  std::string default_busbar;
};

struct SubstationDetail {
  int node = -1;  // the switchable node this detail expands
  std::vector<std::string> busbars;
  std::vector<std::pair<std::string, std::string>> couplers;  // closed by default
  std::vector<Terminal> terminals;

  int busbar_index(const std::string& b) const;
};

// Immutable after load; safe to share read-only across threads.
class GridModel {
 public:
  std::vector<Node> nodes;
  std::vector<Branch> branches;
  std::vector<Injection> injections;
  std::vector<ContingencyCase> contingencies;
  std::vector<BusbarOutage> busbar_outages;
  std::vector<SubstationDetail> substations;
  int slack = -1;

  int node_index(const std::string& id) const;
  int branch_index(const std::string& id) const;
  int injection_index(const std::string& id) const;

  // Branches incident to a node (indices, in-service and out-of-service).
  const std::vector<int>& branches_at(int node) const { return adjacency_[node]; }

  // Substation detail index for a node, or -1 when the node is not switchable.
  int substation_at(int node) const { return substation_of_node_[node]; }

  const std::vector<int>& switchable_nodes() const { return switchable_nodes_; }

  // Busbars electrically connected to `busbar` when `open_couplers` are open
  // (all other couplers closed). Indices into detail.busbars.
  std::vector<int> busbar_group(const SubstationDetail& detail, int busbar,
                                const std::vector<int>& open_couplers) const;

  // In-service branches lost when the given busbar fails, under the default
  // terminal assignment with all couplers closed.
  std::vector<int> implied_branches(const BusbarOutage& outage) const;

  // Variant with an explicit assignment (terminal index -> busbar index) and
  // open coupler set, used once a reconfiguration is applied.
  std::vector<int> implied_branches(const BusbarOutage& outage,
                                    const std::vector<int>& terminal_busbars,
                                    const std::vector<int>& open_couplers) const;

  void rebuild_indices();
  void validate() const;

 private:
  std::unordered_map<std::string, int> node_ids_;
  std::unordered_map<std::string, int> branch_ids_;
  std::unordered_map<std::string, int> injection_ids_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<int> substation_of_node_;
  std::vector<int> switchable_nodes_;
};

GridModel load_grid(const std::filesystem::path& path);
GridModel grid_from_json_text(const std::string& text);
std::string grid_to_json_text(const GridModel& grid);
void save_grid(const GridModel& grid, const std::filesystem::path& path);

// Content hash of the serialized model, used to key the action-set cache.
std::uint64_t grid_content_hash(const GridModel& grid);

// Net nodal injections in MW; the slack entry absorbs the residual so the
// vector sums to zero.
Eigen::VectorXd base_power_vector(const GridModel& grid);

}  // namespace topopt
