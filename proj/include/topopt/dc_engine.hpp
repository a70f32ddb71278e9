#pragma once

#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "topopt/genome.hpp"
#include "topopt/grid_model.hpp"
#include "topopt/importer.hpp"

namespace topopt {

struct DcConfig {
  double islanding_penalty_mw = 10000.0;  // per islanding contingency
  int worst_k = 20;
  double weight_c0 = 200.0;
  double weight_c = 50.0;
  int fitness_variant = 1;  // 1 or 2
  int threads = 0;          // batch evaluation workers, 0 = hardware concurrency
};

struct ScoreVector {
  double lambda_o = 0.0;  // N-1 overload energy, MW
  int lambda_c = 0;       // N-1 critical branches
  int lambda_c0 = 0;      // N-0 critical branches
  double lambda_b = 0.0;  // busbar-outage overload energy, MW
  int lambda_d = 0;       // disconnections
  int lambda_s = 0;       // substations split
  int lambda_r = 0;       // busbar reassignments
  double fitness = 0.0;
  bool islanded = false;  // genome disconnects the grid in the base case
  // (contingency index, overload energy) sorted descending, length <= k
  std::vector<std::pair<int, double>> worst_contingencies;

  static constexpr double kIslandedFitness = -std::numeric_limits<double>::infinity();
};

struct FlowResult {
  Eigen::VectorXd base;             // signed N-0 flows, MW
  Eigen::VectorXd max_contingency;  // elementwise max |flow| over outage cases
  Eigen::VectorXd max_busbar;       // elementwise max |flow| over busbar outages
  std::vector<double> outage_energy;  // per contingency, islanding -> penalty
  int islanded_outages = 0;
  int islanded_busbar_outages = 0;
};

class DcContext;

// Flow operator for one genome's topology, built from the base factorization
// by rank-one susceptance updates. Splits add one electrical node per action;
// the station node keeps group 0 and its identity.
class FlowOperator {
 public:
  bool islanded() const { return islanded_; }
  int extra_nodes() const { return n_new_; }

  // Flows for an arbitrary nodal injection vector (length N + extra_nodes());
  // the slack absorbs any imbalance. Disconnected branches report zero.
  Eigen::VectorXd flows(const Eigen::VectorXd& p_full) const;

  // Flows for the grid's own (slack-balanced, genome-adjusted) injections.
  const Eigen::VectorXd& base_flows() const { return base_flows_; }

 private:
  friend class DcContext;

  const DcContext* ctx_ = nullptr;
  bool islanded_ = false;
  int n_new_ = 0;
  std::vector<std::pair<int, int>> endpoints_;  // per branch, node ids after moves
  std::vector<char> removed_;                   // per branch: genome-disconnected
  std::vector<int> injection_node_;             // per injection, node id after moves
  std::vector<int> action_of_station_;          // substation detail idx -> action id

  // Woodbury data against the base factorization
  int m_ = 0;
  std::vector<std::pair<int, int>> update_pairs_;  // reduced endpoint indices, -1 = slack
  Eigen::MatrixXd gain_;                           // X_aug * U
  Eigen::FullPivLU<Eigen::MatrixXd> capacitance_;
  Eigen::VectorXd base_theta_;
  Eigen::VectorXd base_flows_;

  int reduced(int full_node) const;
  Eigen::VectorXd solve_sparse(const std::vector<std::pair<int, double>>& rhs) const;
  Eigen::VectorXd apply_correction(Eigen::VectorXd y) const;
  Eigen::VectorXd flows_from_theta(const Eigen::VectorXd& theta) const;
};

// Precomputed evaluation context: base factorization, pre-outage injections,
// per-action topology deltas and busbar-outage tables. Immutable after
// construction; evaluation is pure and safe to fan out across workers.
class DcContext {
 public:
  DcContext(const GridModel& grid, const ActionSet& actions, DcConfig config = {});

  const GridModel& grid() const { return *grid_; }
  const ActionSet& actions() const { return *actions_; }
  const DcConfig& config() const { return config_; }

  FlowOperator apply_topology(const Genome& genome) const;
  FlowResult screen_contingencies(const FlowOperator& op) const;
  ScoreVector compute_scores(const FlowResult& flows, const Genome& genome) const;

  ScoreVector evaluate(const Genome& genome) const;
  // Pads to batch_size with the empty genome, scores, drops the padding.
  std::vector<ScoreVector> evaluate_batch(const std::vector<Genome>& genomes,
                                          int batch_size) const;

  const ScoreVector& pre_optimization_score() const { return pre_score_; }
  double lambda_b_pre() const { return lambda_b_pre_; }

 private:
  friend class FlowOperator;

  FlowOperator build_operator(std::vector<std::pair<int, int>> endpoints,
                              std::vector<char> removed,
                              std::vector<int> injection_node,
                              std::vector<int> action_of_station, int n_new,
                              const std::vector<char>& omit_injection) const;

  struct ActionTopology {
    int station_node = -1;
    // per busbar of the station: implied in-service branches when it fails
    std::vector<std::vector<int>> implied_by_busbar;
  };

  const GridModel* grid_;
  const ActionSet* actions_;
  DcConfig config_;

  int n_nodes_ = 0;
  int n_red_ = 0;
  std::vector<int> reduced_;  // node -> reduced index, slack -> -1
  Eigen::MatrixXd x_inv_;     // inverse reduced susceptance matrix
  Eigen::VectorXd p_base_;    // slack-balanced nodal injections, MW
  Eigen::VectorXd y_base_;    // x_inv * reduced(p_base)
  Eigen::VectorXd limits_;
  std::vector<double> susceptance_;
  std::vector<char> in_service_;
  std::vector<ActionTopology> action_topo_;
  std::vector<std::vector<int>> default_implied_;  // per busbar outage

  double lambda_b_pre_ = 0.0;
  ScoreVector pre_score_;

  Eigen::VectorXd x_column(int aug_index) const;  // column of the padded inverse
};

}  // namespace topopt
