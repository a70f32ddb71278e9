#include "topopt/ac_validator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include <json.hpp>

namespace topopt {

namespace {

constexpr double kBaseMva = 100.0;

double clip_positive(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

AcNetwork::AcNetwork(const GridModel& grid, const AppliedTopology& topology,
                     AcConfig config)
    : grid_(&grid), topology_(topology), config_(config) {
  n_buses_ = static_cast<int>(grid.nodes.size()) + topology_.n_new_nodes;
}

AcCaseResult AcNetwork::run_case(int contingency) const {
  std::vector<char> branch_out(grid_->branches.size(), 0);
  std::vector<char> injection_out(grid_->injections.size(), 0);
  if (contingency >= 0) {
    const ContingencyCase& c = grid_->contingencies[contingency];
    for (int e : c.branches) branch_out[e] = 1;
    for (int i : c.injections) injection_out[i] = 1;
  }
  return solve(branch_out, injection_out);
}

AcCaseResult AcNetwork::solve(const std::vector<char>& branch_out,
                              const std::vector<char>& injection_out) const {
  const GridModel& grid = *grid_;
  const int n_branches = static_cast<int>(grid.branches.size());
  AcCaseResult result;
  result.loading_mva = Eigen::VectorXd::Zero(n_branches);
  result.vm_pu = Eigen::VectorXd::Zero(n_buses_);
  result.va_rad = Eigen::VectorXd::Zero(n_buses_);

  std::vector<char> active(n_branches, 0);
  for (int e = 0; e < n_branches; ++e)
    active[e] = grid.branches[e].in_service && !topology_.removed[e] && !branch_out[e];

  // reachability from the slack over live branches
  std::vector<std::vector<std::pair<int, int>>> adj(n_buses_);
  for (int e = 0; e < n_branches; ++e) {
    if (!active[e]) continue;
    auto [f, t] = topology_.endpoints[e];
    adj[f].emplace_back(t, e);
    adj[t].emplace_back(f, e);
  }
  std::vector<char> reachable(n_buses_, 0);
  std::vector<int> stack{grid.slack};
  reachable[grid.slack] = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (auto [w, e] : adj[v]) {
      (void)e;
      if (!reachable[w]) {
        reachable[w] = 1;
        stack.push_back(w);
      }
    }
  }
  for (int e = 0; e < n_branches; ++e)
    if (active[e] && !reachable[topology_.endpoints[e].first])
      return result;  // a live component floats without the slack
  for (int i = 0; i < static_cast<int>(grid.injections.size()); ++i) {
    if (injection_out[i]) continue;
    const Injection& inj = grid.injections[i];
    if ((inj.p_mw != 0.0 || inj.q_mvar != 0.0) && !reachable[topology_.injection_node[i]])
      return result;  // stranded load or generation
  }

  std::vector<int> bus_of(n_buses_, -1);
  std::vector<int> buses;
  for (int v = 0; v < n_buses_; ++v) {
    if (!reachable[v]) continue;
    bus_of[v] = static_cast<int>(buses.size());
    buses.push_back(v);
  }
  const int n = static_cast<int>(buses.size());
  const int slack = bus_of[grid.slack];

  // specified injections and bus types
  Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd q_spec = Eigen::VectorXd::Zero(n);
  std::vector<char> is_pv(n, 0);
  Eigen::VectorXd v_set = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < static_cast<int>(grid.injections.size()); ++i) {
    if (injection_out[i]) continue;
    const Injection& inj = grid.injections[i];
    int b = bus_of[topology_.injection_node[i]];
    if (b < 0) continue;
    if (inj.kind == InjectionKind::Generator) {
      p_spec[b] += inj.p_mw / kBaseMva;
      if (inj.v_setpoint_pu) {
        if (!is_pv[b]) v_set[b] = *inj.v_setpoint_pu;
        is_pv[b] = 1;
      } else {
        q_spec[b] += inj.q_mvar / kBaseMva;
      }
    } else {
      p_spec[b] -= inj.p_mw / kBaseMva;
      q_spec[b] -= inj.q_mvar / kBaseMva;
    }
  }

  using Complex = std::complex<double>;
  Eigen::MatrixXcd ybus = Eigen::MatrixXcd::Zero(n, n);
  std::vector<std::array<Complex, 4>> branch_y(n_branches);  // yff yft ytf ytt
  for (int e = 0; e < n_branches; ++e) {
    if (!active[e]) continue;
    const Branch& br = grid.branches[e];
    Complex y = 1.0 / Complex(br.resistance, br.reactance);
    Complex y_sh(0.0, br.charging_b / 2.0);
    double tap = br.tap;
    Complex yff = (y + y_sh) / (tap * tap);
    Complex yft = -y / tap;
    Complex ytf = -y / tap;
    Complex ytt = y + y_sh;
    branch_y[e] = {yff, yft, ytf, ytt};
    int f = bus_of[topology_.endpoints[e].first];
    int t = bus_of[topology_.endpoints[e].second];
    ybus(f, f) += yff;
    ybus(f, t) += yft;
    ybus(t, f) += ytf;
    ybus(t, t) += ytt;
  }
  for (int v = 0; v < n_buses_; ++v) {
    if (bus_of[v] < 0 || v >= static_cast<int>(grid.nodes.size())) continue;
    if (grid.nodes[v].shunt_b_pu != 0.0)
      ybus(bus_of[v], bus_of[v]) += Complex(0.0, grid.nodes[v].shunt_b_pu);
  }

  // flat start: setpoint magnitudes on regulated buses, 1 pu elsewhere
  Eigen::VectorXd vm = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
  for (int b = 0; b < n; ++b)
    if (is_pv[b] || b == slack) vm[b] = v_set[b];

  std::vector<int> theta_idx, v_idx;
  for (int b = 0; b < n; ++b) {
    if (b == slack) continue;
    theta_idx.push_back(b);
    if (!is_pv[b]) v_idx.push_back(b);
  }
  const int n_theta = static_cast<int>(theta_idx.size());
  const int n_v = static_cast<int>(v_idx.size());
  const int n_unknown = n_theta + n_v;

  Eigen::MatrixXd g = ybus.real(), b_mat = ybus.imag();
  Eigen::VectorXd p_calc(n), q_calc(n);
  auto compute_injections = [&] {
    for (int i = 0; i < n; ++i) {
      double p = 0.0, q = 0.0;
      for (int k = 0; k < n; ++k) {
        if (g(i, k) == 0.0 && b_mat(i, k) == 0.0) continue;
        double angle = va[i] - va[k];
        double c = std::cos(angle), s = std::sin(angle);
        p += vm[i] * vm[k] * (g(i, k) * c + b_mat(i, k) * s);
        q += vm[i] * vm[k] * (g(i, k) * s - b_mat(i, k) * c);
      }
      p_calc[i] = p;
      q_calc[i] = q;
    }
  };

  bool converged = false;
  int iterations = 0;
  for (int iter = 1; iter <= config_.max_iterations; ++iter) {
    compute_injections();
    iterations = iter;
    double worst = 0.0;
    Eigen::VectorXd mismatch(n_unknown);
    for (int r = 0; r < n_theta; ++r) {
      mismatch[r] = p_spec[theta_idx[r]] - p_calc[theta_idx[r]];
      worst = std::max(worst, std::abs(mismatch[r]));
    }
    for (int r = 0; r < n_v; ++r) {
      mismatch[n_theta + r] = q_spec[v_idx[r]] - q_calc[v_idx[r]];
      worst = std::max(worst, std::abs(mismatch[n_theta + r]));
    }
    if (!std::isfinite(worst) || worst > 1e8) break;
    if (worst < config_.tolerance_pu) {
      converged = true;
      break;
    }
    if (iter == config_.max_iterations) break;

    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n_unknown, n_unknown);
    for (int r = 0; r < n_theta; ++r) {
      int i = theta_idx[r];
      for (int c = 0; c < n_theta; ++c) {
        int j = theta_idx[c];
        if (i == j) {
          jac(r, c) = -q_calc[i] - b_mat(i, i) * vm[i] * vm[i];
        } else {
          double angle = va[i] - va[j];
          jac(r, c) = vm[i] * vm[j] *
                      (g(i, j) * std::sin(angle) - b_mat(i, j) * std::cos(angle));
        }
      }
      for (int c = 0; c < n_v; ++c) {
        int j = v_idx[c];
        if (i == j) {
          jac(r, n_theta + c) = p_calc[i] / vm[i] + g(i, i) * vm[i];
        } else {
          double angle = va[i] - va[j];
          jac(r, n_theta + c) =
              vm[i] * (g(i, j) * std::cos(angle) + b_mat(i, j) * std::sin(angle));
        }
      }
    }
    for (int r = 0; r < n_v; ++r) {
      int i = v_idx[r];
      for (int c = 0; c < n_theta; ++c) {
        int j = theta_idx[c];
        if (i == j) {
          jac(n_theta + r, c) = p_calc[i] - g(i, i) * vm[i] * vm[i];
        } else {
          double angle = va[i] - va[j];
          jac(n_theta + r, c) = -vm[i] * vm[j] *
                                (g(i, j) * std::cos(angle) + b_mat(i, j) * std::sin(angle));
        }
      }
      for (int c = 0; c < n_v; ++c) {
        int j = v_idx[c];
        if (i == j) {
          jac(n_theta + r, n_theta + c) = q_calc[i] / vm[i] - b_mat(i, i) * vm[i];
        } else {
          double angle = va[i] - va[j];
          jac(n_theta + r, n_theta + c) =
              vm[i] * (g(i, j) * std::sin(angle) - b_mat(i, j) * std::cos(angle));
        }
      }
    }

    Eigen::VectorXd step = jac.partialPivLu().solve(mismatch);
    if (!step.allFinite()) break;
    for (int r = 0; r < n_theta; ++r) va[theta_idx[r]] += step[r];
    for (int r = 0; r < n_v; ++r) vm[v_idx[r]] += step[n_theta + r];
  }

  result.iterations = iterations;
  if (!converged) return result;
  result.converged = true;
  for (int b = 0; b < n; ++b) {
    result.vm_pu[buses[b]] = vm[b];
    result.va_rad[buses[b]] = va[b];
  }

  for (int e = 0; e < n_branches; ++e) {
    if (!active[e]) continue;
    int f = bus_of[topology_.endpoints[e].first];
    int t = bus_of[topology_.endpoints[e].second];
    std::complex<double> vf = std::polar(vm[f], va[f]);
    std::complex<double> vt = std::polar(vm[t], va[t]);
    auto [yff, yft, ytf, ytt] = branch_y[e];
    std::complex<double> s_from = vf * std::conj(yff * vf + yft * vt);
    std::complex<double> s_to = vt * std::conj(ytf * vf + ytt * vt);
    result.loading_mva[e] = std::max(std::abs(s_from), std::abs(s_to)) * kBaseMva;
  }
  return result;
}

double AcNetwork::overload_energy(const AcCaseResult& result) const {
  double energy = 0.0;
  for (int e = 0; e < static_cast<int>(grid_->branches.size()); ++e)
    energy += clip_positive(result.loading_mva[e] - grid_->branches[e].flow_limit);
  return energy;
}

int AcNetwork::critical_count(const AcCaseResult& result) const {
  int count = 0;
  for (int e = 0; e < static_cast<int>(grid_->branches.size()); ++e)
    if (result.loading_mva[e] > grid_->branches[e].flow_limit) ++count;
  return count;
}

AcCaseResult ac_power_flow(const GridModel& grid, const AppliedTopology& topology,
                           AcConfig config) {
  return AcNetwork(grid, topology, config).run_case(-1);
}

std::string to_string(RejectionReason reason) {
  switch (reason) {
    case RejectionReason::None:
      return "none";
    case RejectionReason::Nonconvergence:
      return "nonconvergence";
    case RejectionReason::OverloadNotImproved:
      return "overload_not_improved";
    case RejectionReason::CriticalCountIncreased:
      return "critical_count_increased";
    case RejectionReason::EliminatedSimilar:
      return "eliminated_similar";
    case RejectionReason::EliminatedDominated:
      return "eliminated_dominated";
    case RejectionReason::EliminatedBelowThreshold:
      return "eliminated_below_threshold";
  }
  return "none";
}

AcValidator::AcValidator(const GridModel& grid, const ActionSet& actions,
                         const DcContext& dc, AcConfig config)
    : grid_(&grid), actions_(&actions), dc_(&dc), config_(config) {
  pre_fitness_ = dc.pre_optimization_score().fitness;

  Genome empty = Genome::empty(0, 0);
  AcNetwork net(grid, apply_genome(grid, actions, empty), config_);
  AcCaseResult base = net.run_case(-1);
  baseline_base_converged_ = base.converged;
  baseline_base_energy_ = base.converged ? net.overload_energy(base) : 0.0;

  const int n_branches = static_cast<int>(grid.branches.size());
  Eigen::VectorXd max_loading = Eigen::VectorXd::Zero(n_branches);
  baseline_case_converged_.assign(grid.contingencies.size(), 0);
  baseline_case_energy_.assign(grid.contingencies.size(), 0.0);
  for (int ci = 0; ci < static_cast<int>(grid.contingencies.size()); ++ci) {
    AcCaseResult r = net.run_case(ci);
    baseline_case_converged_[ci] = r.converged;
    if (!r.converged) continue;
    baseline_case_energy_[ci] = net.overload_energy(r);
    max_loading = max_loading.cwiseMax(r.loading_mva);
  }
  for (int e = 0; e < n_branches; ++e) {
    baseline_lambda_o_ += clip_positive(max_loading[e] - grid.branches[e].flow_limit);
    if (max_loading[e] > grid.branches[e].flow_limit) ++baseline_critical_count_;
  }
}

EliminationOutcome AcValidator::eliminate(const std::vector<Candidate>& candidates) const {
  const double eps_fit = config_.dominance_fitness_frac * std::abs(pre_fitness_);
  const double theta = config_.improvement_threshold_frac * std::abs(pre_fitness_);
  auto swd = [](const ScoreVector& s) { return s.lambda_d + s.lambda_s + s.lambda_r; };

  EliminationOutcome out;
  for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
    const Candidate& cand = candidates[i];
    RejectionReason reason = RejectionReason::None;

    for (const ValidatedEntry& v : validated_) {
      if (genome_distance(cand.genome, v.genome) <= config_.similarity_distance) {
        reason = RejectionReason::EliminatedSimilar;
        break;
      }
    }
    if (reason == RejectionReason::None) {
      auto dominates = [&](int other_swd, double other_fitness) {
        return other_swd < swd(cand.dc_score) &&
               other_fitness >= cand.dc_score.fitness - eps_fit;
      };
      for (const Candidate& other : candidates) {
        if (dominates(swd(other.dc_score), other.dc_score.fitness)) {
          reason = RejectionReason::EliminatedDominated;
          break;
        }
      }
      if (reason == RejectionReason::None) {
        for (const ValidatedEntry& v : validated_) {
          if (dominates(v.switching_distance, v.fitness)) {
            reason = RejectionReason::EliminatedDominated;
            break;
          }
        }
      }
    }
    if (reason == RejectionReason::None) {
      double improvement = cand.dc_score.fitness - pre_fitness_;
      if (!std::isfinite(cand.dc_score.fitness) || improvement < theta)
        reason = RejectionReason::EliminatedBelowThreshold;
    }

    if (reason == RejectionReason::None)
      out.queue.push_back(i);
    else
      out.pruned.emplace_back(i, reason);
  }

  std::sort(out.queue.begin(), out.queue.end(), [&](int a, int b) {
    if (candidates[a].dc_score.fitness != candidates[b].dc_score.fitness)
      return candidates[a].dc_score.fitness > candidates[b].dc_score.fitness;
    return candidates[a].genome.canonical_key() < candidates[b].genome.canonical_key();
  });
  return out;
}

RejectionReason AcValidator::worst_k_check(const Genome& genome,
                                           const ScoreVector& dc_score) const {
  AcNetwork net(*grid_, apply_genome(*grid_, *actions_, genome), config_);
  AcCaseResult base = net.run_case(-1);
  if (!base.converged) return RejectionReason::Nonconvergence;

  // a candidate without any DC overload has no worst cases to screen on;
  // the full N-1 stage decides it
  if (dc_score.worst_contingencies.empty()) return RejectionReason::None;

  double genome_sum = net.overload_energy(base);
  double baseline_sum = baseline_base_energy_;
  int failures = 0;
  for (const auto& [ci, dc_energy] : dc_score.worst_contingencies) {
    (void)dc_energy;
    AcCaseResult r = net.run_case(ci);
    if (!r.converged) {
      if (++failures > config_.worst_k_nonconverged)
        return RejectionReason::Nonconvergence;
      continue;
    }
    if (!baseline_case_converged_[ci]) continue;  // nothing to compare against
    genome_sum += net.overload_energy(r);
    baseline_sum += baseline_case_energy_[ci];
  }
  if (baseline_base_converged_ && genome_sum >= baseline_sum)
    return RejectionReason::OverloadNotImproved;
  return RejectionReason::None;
}

ValidationRecord AcValidator::full_validation(const Genome& genome,
                                              const ScoreVector& dc_score) const {
  ValidationRecord record;
  record.genome = genome;
  record.dc_score = dc_score;
  record.stage = ValidationStage::FullN1;

  AcNetwork net(*grid_, apply_genome(*grid_, *actions_, genome), config_);
  AcCaseResult base = net.run_case(-1);
  const int n_cases = static_cast<int>(grid_->contingencies.size());
  const int n_branches = static_cast<int>(grid_->branches.size());

  int nonconverged = 0;
  Eigen::VectorXd max_loading = Eigen::VectorXd::Zero(n_branches);
  for (int ci = 0; ci < n_cases; ++ci) {
    AcCaseResult r = net.run_case(ci);
    if (!r.converged) {
      ++nonconverged;
      continue;
    }
    max_loading = max_loading.cwiseMax(r.loading_mva);
  }

  if (!base.converged || nonconverged > config_.nonconverged_fraction * n_cases) {
    record.reason = RejectionReason::Nonconvergence;
    return record;
  }

  double lambda_o = 0.0;
  int critical = 0;
  for (int e = 0; e < n_branches; ++e) {
    lambda_o += clip_positive(max_loading[e] - grid_->branches[e].flow_limit);
    if (max_loading[e] > grid_->branches[e].flow_limit) ++critical;
  }
  record.ac_lambda_o = lambda_o;

  if (!(lambda_o < baseline_lambda_o_)) {
    record.reason = RejectionReason::OverloadNotImproved;
    return record;
  }
  if (critical > baseline_critical_count_) {
    record.reason = RejectionReason::CriticalCountIncreased;
    return record;
  }
  record.accepted = true;
  return record;
}

ValidationRecord AcValidator::validate(const Candidate& candidate) {
  auto swd = candidate.dc_score.lambda_d + candidate.dc_score.lambda_s +
             candidate.dc_score.lambda_r;
  validated_.push_back({candidate.genome, swd, candidate.dc_score.fitness});

  RejectionReason early = worst_k_check(candidate.genome, candidate.dc_score);
  ValidationRecord record;
  if (early != RejectionReason::None) {
    record.genome = candidate.genome;
    record.dc_score = candidate.dc_score;
    record.stage = ValidationStage::WorstK;
    record.reason = early;
  } else {
    record = full_validation(candidate.genome, candidate.dc_score);
  }
  records_.push_back(record);
  return record;
}

void AcValidator::record_elimination(const Candidate& candidate,
                                     RejectionReason reason) {
  ValidationRecord record;
  record.genome = candidate.genome;
  record.dc_score = candidate.dc_score;
  record.stage = ValidationStage::None;
  record.reason = reason;
  records_.push_back(record);
}

std::string record_to_json(const ValidationRecord& record, const GridModel& grid,
                           const ActionSet& actions) {
  nlohmann::ordered_json j;
  j["actions"] = nlohmann::ordered_json::array();
  for (int a : record.genome.action_ids()) j["actions"].push_back(a);
  j["disconnections"] = nlohmann::ordered_json::array();
  for (int d : record.genome.disconnection_ids())
    j["disconnections"].push_back(grid.branches[actions.disconnectables[d]].id);
  j["lambda_d"] = record.dc_score.lambda_d;
  j["lambda_s"] = record.dc_score.lambda_s;
  j["lambda_r"] = record.dc_score.lambda_r;
  j["dc_fitness"] = std::isfinite(record.dc_score.fitness)
                        ? record.dc_score.fitness
                        : -1e30;
  j["dc_lambda_o"] = record.dc_score.lambda_o;
  switch (record.stage) {
    case ValidationStage::None:
      j["stage"] = "eliminated";
      break;
    case ValidationStage::WorstK:
      j["stage"] = "worst_k";
      break;
    case ValidationStage::FullN1:
      j["stage"] = "full_n1";
      break;
  }
  j["verdict"] = record.accepted ? "accepted" : "rejected";
  j["reason"] = record.accepted ? "" : to_string(record.reason);
  j["ac_lambda_o"] = record.ac_lambda_o;
  return j.dump();
}

}  // namespace topopt
