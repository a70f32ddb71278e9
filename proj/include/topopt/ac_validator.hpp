#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topopt/dc_engine.hpp"
#include "topopt/genome.hpp"
#include "topopt/grid_model.hpp"
#include "topopt/importer.hpp"
#include "topopt/rng.hpp"

namespace topopt {

struct AcConfig {
  double tolerance_pu = 1e-6;
  int max_iterations = 30;
  int worst_k_nonconverged = 2;     // q: tolerated failures in the worst-k stage
  double nonconverged_fraction = 0.05;  // q_frac: tolerated failures in full N-1
  int similarity_distance = 1;          // delta_sim
  double dominance_fitness_frac = 0.01;   // eps_fit as share of |pre fitness|
  double improvement_threshold_frac = 0.05;  // theta as share of |pre fitness|
};

struct AcCaseResult {
  bool converged = false;
  int iterations = 0;
  // per branch: max apparent power of both ends, MVA; meaningful iff converged
  Eigen::VectorXd loading_mva;
  // per bus (base nodes then split sections); zero on dead or islanded buses
  Eigen::VectorXd vm_pu;
  Eigen::VectorXd va_rad;
};

// Full nonlinear network for one applied topology. Newton-Raphson in polar
// form from flat start; generators hold their voltage setpoints, loads are
// constant PQ.
class AcNetwork {
 public:
  AcNetwork(const GridModel& grid, const AppliedTopology& topology,
            AcConfig config = {});

  // contingency = index into grid.contingencies, or -1 for the base case
  AcCaseResult run_case(int contingency) const;

  double overload_energy(const AcCaseResult& result) const;
  int critical_count(const AcCaseResult& result) const;

 private:
  const GridModel* grid_;
  AppliedTopology topology_;
  AcConfig config_;
  int n_buses_ = 0;

  AcCaseResult solve(const std::vector<char>& branch_out,
                     const std::vector<char>& injection_out) const;
};

AcCaseResult ac_power_flow(const GridModel& grid, const AppliedTopology& topology,
                           AcConfig config = {});

enum class RejectionReason {
  None,
  Nonconvergence,
  OverloadNotImproved,
  CriticalCountIncreased,
  EliminatedSimilar,
  EliminatedDominated,
  EliminatedBelowThreshold,
};

std::string to_string(RejectionReason reason);

enum class ValidationStage { None, WorstK, FullN1 };

struct ValidationRecord {
  Genome genome;
  ScoreVector dc_score;
  ValidationStage stage = ValidationStage::None;
  bool accepted = false;
  RejectionReason reason = RejectionReason::None;
  double ac_lambda_o = 0.0;  // meaningful for full-stage results
};

struct Candidate {
  Genome genome;
  ScoreVector dc_score;
};

struct EliminationOutcome {
  std::vector<int> queue;  // candidate indices, best DC fitness first
  std::vector<std::pair<int, RejectionReason>> pruned;
};

// Validates DC-proposed topologies against the full AC model. Baseline AC
// metrics for the unchanged grid are computed once at construction.
class AcValidator {
 public:
  AcValidator(const GridModel& grid, const ActionSet& actions,
              const DcContext& dc, AcConfig config = {});

  const AcConfig& config() const { return config_; }
  double baseline_lambda_o() const { return baseline_lambda_o_; }
  int baseline_critical_count() const { return baseline_critical_count_; }

  // Repertoire elimination: similarity to validated genomes, dominance within
  // the pool, and a minimum DC improvement.
  EliminationOutcome eliminate(const std::vector<Candidate>& candidates) const;

  // Worst-k prefilter: base case plus the candidate's worst DC contingencies.
  // Returns None on pass, otherwise the early-rejection reason.
  RejectionReason worst_k_check(const Genome& genome, const ScoreVector& dc_score) const;

  // Full N-1 validation; assumes the worst-k stage passed.
  ValidationRecord full_validation(const Genome& genome,
                                   const ScoreVector& dc_score) const;

  // Complete pipeline for one candidate; appends to the validation history.
  ValidationRecord validate(const Candidate& candidate);

  void record_elimination(const Candidate& candidate, RejectionReason reason);
  const std::vector<ValidationRecord>& records() const { return records_; }

 private:
  const GridModel* grid_;
  const ActionSet* actions_;
  const DcContext* dc_;
  AcConfig config_;

  double pre_fitness_ = 0.0;
  double baseline_lambda_o_ = 0.0;
  int baseline_critical_count_ = 0;
  bool baseline_base_converged_ = false;
  double baseline_base_energy_ = 0.0;
  std::vector<char> baseline_case_converged_;
  std::vector<double> baseline_case_energy_;

  struct ValidatedEntry {
    Genome genome;
    int switching_distance = 0;
    double fitness = 0.0;
  };
  std::vector<ValidatedEntry> validated_;
  std::vector<ValidationRecord> records_;
};

std::string record_to_json(const ValidationRecord& record, const GridModel& grid,
                           const ActionSet& actions);

}  // namespace topopt
