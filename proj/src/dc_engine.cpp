#include "topopt/dc_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "topopt/graph_utils.hpp"

namespace topopt {

namespace {

constexpr double kPlaceholder = 1.0;  // dummy ground admittance for new-node slots

double clip_positive(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

int FlowOperator::reduced(int full_node) const {
  if (full_node < 0) return -1;
  if (full_node < ctx_->n_nodes_) return ctx_->reduced_[full_node];
  return ctx_->n_red_ + (full_node - ctx_->n_nodes_);
}

Eigen::VectorXd FlowOperator::solve_sparse(
    const std::vector<std::pair<int, double>>& rhs) const {
  const int dim = ctx_->n_red_ + n_new_;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(dim);
  for (auto [full_node, value] : rhs) {
    int r = reduced(full_node);
    if (r < 0) continue;  // slack entries are absorbed
    if (r < ctx_->n_red_)
      y.head(ctx_->n_red_) += value * ctx_->x_inv_.col(r);
    else
      y[r] += value / kPlaceholder;
  }
  return apply_correction(std::move(y));
}

Eigen::VectorXd FlowOperator::apply_correction(Eigen::VectorXd y) const {
  if (m_ == 0) return y;
  Eigen::VectorXd z(m_);
  for (int r = 0; r < m_; ++r) {
    auto [a, b] = update_pairs_[r];
    z[r] = (a >= 0 ? y[a] : 0.0) - (b >= 0 ? y[b] : 0.0);
  }
  y.noalias() -= gain_ * capacitance_.solve(z);
  return y;
}

Eigen::VectorXd FlowOperator::flows_from_theta(const Eigen::VectorXd& theta) const {
  const auto& ctx = *ctx_;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(ctx.grid_->branches.size());
  for (int e = 0; e < static_cast<int>(ctx.grid_->branches.size()); ++e) {
    if (!ctx.in_service_[e] || removed_[e]) continue;
    int i = reduced(endpoints_[e].first);
    int j = reduced(endpoints_[e].second);
    double ti = i >= 0 ? theta[i] : 0.0;
    double tj = j >= 0 ? theta[j] : 0.0;
    f[e] = ctx.susceptance_[e] * (ti - tj);
  }
  return f;
}

Eigen::VectorXd FlowOperator::flows(const Eigen::VectorXd& p_full) const {
  const auto& ctx = *ctx_;
  const int dim = ctx.n_red_ + n_new_;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd p_red(ctx.n_red_);
  for (int v = 0; v < ctx.n_nodes_; ++v)
    if (ctx.reduced_[v] >= 0) p_red[ctx.reduced_[v]] = p_full[v];
  y.head(ctx.n_red_) = ctx.x_inv_ * p_red;
  for (int k = 0; k < n_new_; ++k)
    y[ctx.n_red_ + k] = p_full[ctx.n_nodes_ + k] / kPlaceholder;
  return flows_from_theta(apply_correction(std::move(y)));
}

DcContext::DcContext(const GridModel& grid, const ActionSet& actions, DcConfig config)
    : grid_(&grid), actions_(&actions), config_(std::move(config)) {
  n_nodes_ = static_cast<int>(grid.nodes.size());
  n_red_ = n_nodes_ - 1;
  reduced_.assign(n_nodes_, -1);
  for (int v = 0, r = 0; v < n_nodes_; ++v)
    if (v != grid.slack) reduced_[v] = r++;

  Eigen::MatrixXd b_mat = Eigen::MatrixXd::Zero(n_red_, n_red_);
  susceptance_.resize(grid.branches.size());
  in_service_.resize(grid.branches.size());
  limits_.resize(grid.branches.size());
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e) {
    const Branch& br = grid.branches[e];
    susceptance_[e] = 1.0 / br.reactance;
    in_service_[e] = br.in_service;
    limits_[e] = br.flow_limit;
    if (!br.in_service) continue;
    int i = reduced_[br.from], j = reduced_[br.to];
    double b = susceptance_[e];
    if (i >= 0) b_mat(i, i) += b;
    if (j >= 0) b_mat(j, j) += b;
    if (i >= 0 && j >= 0) {
      b_mat(i, j) -= b;
      b_mat(j, i) -= b;
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(b_mat);
  if (!lu.isInvertible())
    throw SingularSystem("susceptance matrix is singular; the grid is disconnected");
  x_inv_ = lu.inverse();

  p_base_ = base_power_vector(grid);
  Eigen::VectorXd p_red(n_red_);
  for (int v = 0; v < n_nodes_; ++v)
    if (reduced_[v] >= 0) p_red[reduced_[v]] = p_base_[v];
  y_base_ = x_inv_ * p_red;

  action_topo_.resize(actions.actions.size());
  for (int a = 0; a < static_cast<int>(actions.actions.size()); ++a) {
    const Action& act = actions.actions[a];
    const SubstationDetail& st = grid.substations[act.substation];
    ActionTopology topo;
    topo.station_node = st.node;
    topo.implied_by_busbar.resize(st.busbars.size());
    for (int b = 0; b < static_cast<int>(st.busbars.size()); ++b) {
      BusbarOutage probe{"", act.substation, st.busbars[b]};
      topo.implied_by_busbar[b] =
          grid.implied_branches(probe, act.busbar_assignment, act.open_couplers);
    }
    action_topo_[a] = std::move(topo);
  }

  default_implied_.reserve(grid.busbar_outages.size());
  for (const BusbarOutage& bo : grid.busbar_outages)
    default_implied_.push_back(grid.implied_branches(bo));

  // Pre-optimization reference: score of the unchanged topology.
  Genome empty = Genome::empty(0, 0);
  FlowResult flows = screen_contingencies(apply_topology(empty));
  double lb = 0.0;
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e)
    lb += clip_positive(flows.max_busbar[e] - limits_[e]);
  lambda_b_pre_ = lb + config_.islanding_penalty_mw * flows.islanded_busbar_outages;
  pre_score_ = compute_scores(flows, empty);
}

FlowOperator DcContext::apply_topology(const Genome& genome) const {
  AppliedTopology t = apply_genome(*grid_, *actions_, genome);
  return build_operator(std::move(t.endpoints), std::move(t.removed),
                        std::move(t.injection_node), std::move(t.action_of_station),
                        t.n_new_nodes, {});
}

FlowOperator DcContext::build_operator(std::vector<std::pair<int, int>> endpoints,
                                       std::vector<char> removed,
                                       std::vector<int> injection_node,
                                       std::vector<int> action_of_station, int n_new,
                                       const std::vector<char>& omit_injection) const {
  const GridModel& grid = *grid_;
  FlowOperator op;
  op.ctx_ = this;
  op.n_new_ = n_new;
  op.endpoints_ = std::move(endpoints);
  op.removed_ = std::move(removed);
  op.injection_node_ = std::move(injection_node);
  op.action_of_station_ = std::move(action_of_station);

  auto omitted = [&](int inj) {
    return !omit_injection.empty() && omit_injection[inj];
  };

  // A node stripped of every branch is a dead busbar: harmless unless it still
  // carries an injection. Components holding branches or injections must stay
  // with the slack; anything else islands the genome.
  const int n_total = n_nodes_ + n_new;
  std::vector<GraphEdge> edges;
  edges.reserve(grid.branches.size());
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e)
    edges.push_back({op.endpoints_[e].first, op.endpoints_[e].second,
                     static_cast<bool>(in_service_[e]) && !op.removed_[e]});
  std::vector<char> has_branch(n_total, 0);
  for (const GraphEdge& e : edges) {
    if (!e.active) continue;
    has_branch[e.from] = 1;
    has_branch[e.to] = 1;
  }
  std::vector<char> hosts(has_branch);
  for (int i = 0; i < static_cast<int>(op.injection_node_.size()); ++i)
    if (!omitted(i) && grid.injections[i].net_mw() != 0.0)
      hosts[op.injection_node_[i]] = 1;

  std::vector<int> must_reach;
  for (int v = 0; v < n_total; ++v)
    if (hosts[v]) must_reach.push_back(v);
  if (!must_reach.empty() &&
      !graph_connected_without(n_total, edges, {}, must_reach)) {
    op.islanded_ = true;
    return op;
  }

  // Rank-one susceptance updates against the base factorization.
  std::vector<double> deltas;
  for (int e = 0; e < static_cast<int>(grid.branches.size()); ++e) {
    if (!in_service_[e]) continue;
    const Branch& br = grid.branches[e];
    bool moved = op.endpoints_[e].first != br.from || op.endpoints_[e].second != br.to;
    if (op.removed_[e]) {
      op.update_pairs_.emplace_back(reduced_[br.from], reduced_[br.to]);
      deltas.push_back(-susceptance_[e]);
    } else if (moved) {
      op.update_pairs_.emplace_back(reduced_[br.from], reduced_[br.to]);
      deltas.push_back(-susceptance_[e]);
      op.update_pairs_.emplace_back(op.reduced(op.endpoints_[e].first),
                                    op.reduced(op.endpoints_[e].second));
      deltas.push_back(susceptance_[e]);
    }
  }
  // dead busbars get a dummy ground so the system stays regular: new-node
  // slots keep their placeholder, stripped base nodes gain one
  for (int k = 0; k < n_new; ++k) {
    if (!has_branch[n_nodes_ + k]) continue;
    op.update_pairs_.emplace_back(n_red_ + k, -1);
    deltas.push_back(-kPlaceholder);
  }
  for (int v = 0; v < n_nodes_; ++v) {
    if (has_branch[v] || v == grid.slack) continue;
    op.update_pairs_.emplace_back(reduced_[v], -1);
    deltas.push_back(kPlaceholder);
  }
  op.m_ = static_cast<int>(deltas.size());

  const int dim = n_red_ + op.n_new_;
  op.gain_.resize(dim, op.m_);
  for (int r = 0; r < op.m_; ++r) {
    auto [a, b] = op.update_pairs_[r];
    Eigen::VectorXd col = Eigen::VectorXd::Zero(dim);
    auto add = [&](int idx, double sign) {
      if (idx < 0) return;
      if (idx < n_red_)
        col.head(n_red_) += sign * x_inv_.col(idx);
      else
        col[idx] += sign / kPlaceholder;
    };
    add(a, 1.0);
    add(b, -1.0);
    op.gain_.col(r) = col;
  }
  if (op.m_ > 0) {
    Eigen::MatrixXd cap(op.m_, op.m_);
    for (int r = 0; r < op.m_; ++r) {
      auto [a, b] = op.update_pairs_[r];
      for (int c = 0; c < op.m_; ++c) {
        double v = (a >= 0 ? op.gain_(a, c) : 0.0) - (b >= 0 ? op.gain_(b, c) : 0.0);
        cap(r, c) = v + (r == c ? 1.0 / deltas[r] : 0.0);
      }
    }
    op.capacitance_.compute(cap);
    op.capacitance_.setThreshold(1e-10);
    if (!op.capacitance_.isInvertible()) {
      op.islanded_ = true;
      return op;
    }
  }

  // Base injections, with moved elements reassigned and omitted ones dropped.
  Eigen::VectorXd y = Eigen::VectorXd::Zero(dim);
  y.head(n_red_) = y_base_;
  for (int i = 0; i < static_cast<int>(grid.injections.size()); ++i) {
    double net = grid.injections[i].net_mw();
    if (net == 0.0) continue;
    int node = op.injection_node_[i];
    int old_red = reduced_[grid.injections[i].node];
    if (omitted(i)) {
      if (old_red >= 0) y.head(n_red_) -= net * x_inv_.col(old_red);
    } else if (node >= n_nodes_) {
      if (old_red >= 0) y.head(n_red_) -= net * x_inv_.col(old_red);
      y[n_red_ + (node - n_nodes_)] += net / kPlaceholder;
    }
  }
  op.base_theta_ = op.apply_correction(std::move(y));
  op.base_flows_ = op.flows_from_theta(op.base_theta_);
  return op;
}

FlowResult DcContext::screen_contingencies(const FlowOperator& op) const {
  const GridModel& grid = *grid_;
  const int n_branches = static_cast<int>(grid.branches.size());
  FlowResult result;
  result.base = op.base_flows();
  result.max_contingency = Eigen::VectorXd::Zero(n_branches);
  result.max_busbar = Eigen::VectorXd::Zero(n_branches);
  result.outage_energy.assign(grid.contingencies.size(), 0.0);

  auto transfer_column = [&](int from, int to) {
    return op.flows_from_theta(op.solve_sparse({{from, 1.0}, {to, -1.0}}));
  };
  auto injection_column = [&](int node) {
    return op.flows_from_theta(op.solve_sparse({{node, 1.0}}));
  };

  // Outage state solved from scratch; used when the flow compensation is
  // singular (the outage bares a busbar section or islands the grid).
  auto outage_rebuild = [&](const std::vector<int>& branches_out,
                            const std::vector<int>& injections_out,
                            Eigen::VectorXd& f_out) -> bool {
    std::vector<char> removed = op.removed_;
    for (int e : branches_out) removed[e] = 1;
    std::vector<char> omit(grid.injections.size(), 0);
    for (int inj : injections_out) omit[inj] = 1;
    FlowOperator alt =
        build_operator(op.endpoints_, std::move(removed), op.injection_node_,
                       op.action_of_station_, op.n_new_, omit);
    if (alt.islanded()) return false;
    f_out = alt.base_flows();
    return true;
  };

  // Post-outage flows via multi-element flow compensation.
  auto outage_flows = [&](const std::vector<int>& branches_out,
                          const std::vector<int>& injections_out,
                          Eigen::VectorXd& f_out) -> bool {
    Eigen::VectorXd f = result.base;
    for (int inj : injections_out) {
      double net = grid.injections[inj].net_mw();
      if (net == 0.0) continue;
      f.noalias() -= net * injection_column(op.injection_node_[inj]);
    }
    std::vector<int> active_out;
    for (int e : branches_out)
      if (in_service_[e] && !op.removed_[e]) active_out.push_back(e);
    if (!active_out.empty()) {
      const int s = static_cast<int>(active_out.size());
      std::vector<Eigen::VectorXd> cols(s);
      for (int c = 0; c < s; ++c)
        cols[c] = transfer_column(op.endpoints_[active_out[c]].first,
                                  op.endpoints_[active_out[c]].second);
      Eigen::MatrixXd a_mat(s, s);
      Eigen::VectorXd f_s(s);
      for (int r = 0; r < s; ++r) {
        f_s[r] = f[active_out[r]];
        for (int c = 0; c < s; ++c)
          a_mat(r, c) = (r == c ? 1.0 : 0.0) - cols[c][active_out[r]];
      }
      // a_mat is dimensionless with O(1) entries; a vanishing singular value
      // means the removals disconnect something
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(a_mat,
                                            Eigen::ComputeFullU | Eigen::ComputeFullV);
      if (svd.singularValues()(s - 1) < 1e-8)
        return outage_rebuild(branches_out, injections_out, f_out);
      Eigen::VectorXd scale = svd.solve(f_s);
      for (int c = 0; c < s; ++c) f.noalias() += scale[c] * cols[c];
      for (int e : active_out) f[e] = 0.0;
    }
    f_out = std::move(f);
    return true;
  };

  for (int ci = 0; ci < static_cast<int>(grid.contingencies.size()); ++ci) {
    const ContingencyCase& c = grid.contingencies[ci];
    Eigen::VectorXd f;
    if (!outage_flows(c.branches, c.injections, f)) {
      result.outage_energy[ci] = config_.islanding_penalty_mw;
      ++result.islanded_outages;
      continue;
    }
    double energy = 0.0;
    for (int e = 0; e < n_branches; ++e)
      energy += clip_positive(std::abs(f[e]) - limits_[e]);
    result.outage_energy[ci] = energy;
    result.max_contingency = result.max_contingency.cwiseMax(f.cwiseAbs());
  }

  for (int bi = 0; bi < static_cast<int>(grid.busbar_outages.size()); ++bi) {
    const BusbarOutage& bo = grid.busbar_outages[bi];
    const SubstationDetail& st = grid.substations[bo.substation];
    int action = op.action_of_station_[bo.substation];
    const std::vector<int>& implied =
        action >= 0 ? action_topo_[action].implied_by_busbar[st.busbar_index(bo.busbar)]
                    : default_implied_[bi];
    Eigen::VectorXd f;
    if (!outage_flows(implied, {}, f)) {
      ++result.islanded_busbar_outages;
      continue;
    }
    result.max_busbar = result.max_busbar.cwiseMax(f.cwiseAbs());
  }
  return result;
}

ScoreVector DcContext::compute_scores(const FlowResult& flows,
                                      const Genome& genome) const {
  ScoreVector score;
  const int n_branches = static_cast<int>(grid_->branches.size());
  for (int e = 0; e < n_branches; ++e) {
    score.lambda_o += clip_positive(flows.max_contingency[e] - limits_[e]);
    if (flows.max_contingency[e] > limits_[e]) ++score.lambda_c;
    if (std::abs(flows.base[e]) > limits_[e]) ++score.lambda_c0;
    score.lambda_b += clip_positive(flows.max_busbar[e] - limits_[e]);
  }
  score.lambda_o += config_.islanding_penalty_mw * flows.islanded_outages;
  score.lambda_b += config_.islanding_penalty_mw * flows.islanded_busbar_outages;
  score.lambda_d = genome.disconnection_count();
  score.lambda_s = genome.split_count();
  for (int a : genome.action_slots)
    if (a >= 0) score.lambda_r += actions_->actions[a].reassignment_distance;

  score.fitness = -(score.lambda_o + config_.weight_c0 * score.lambda_c0 +
                    config_.weight_c * score.lambda_c);
  if (config_.fitness_variant == 2)
    score.fitness -= clip_positive(score.lambda_b - lambda_b_pre_);

  std::vector<std::pair<int, double>> worst;
  for (int ci = 0; ci < static_cast<int>(flows.outage_energy.size()); ++ci)
    if (flows.outage_energy[ci] > 0.0) worst.emplace_back(ci, flows.outage_energy[ci]);
  std::sort(worst.begin(), worst.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(worst.size()) > config_.worst_k) worst.resize(config_.worst_k);
  score.worst_contingencies = std::move(worst);
  return score;
}

ScoreVector DcContext::evaluate(const Genome& genome) const {
  FlowOperator op = apply_topology(genome);
  if (op.islanded()) {
    ScoreVector score;
    score.islanded = true;
    score.fitness = ScoreVector::kIslandedFitness;
    score.lambda_d = genome.disconnection_count();
    score.lambda_s = genome.split_count();
    for (int a : genome.action_slots)
      if (a >= 0) score.lambda_r += actions_->actions[a].reassignment_distance;
    return score;
  }
  return compute_scores(screen_contingencies(op), genome);
}

std::vector<ScoreVector> DcContext::evaluate_batch(const std::vector<Genome>& genomes,
                                                   int batch_size) const {
  std::vector<Genome> padded = genomes;
  while (static_cast<int>(padded.size()) < batch_size)
    padded.push_back(Genome::empty(0, 0));
  std::vector<ScoreVector> scores(padded.size());

  int workers = config_.threads > 0
                    ? config_.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp<int>(workers, 1, static_cast<int>(padded.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < padded.size(); ++i) scores[i] = evaluate(padded[i]);
  } else {
    // evaluation is pure; workers write disjoint slots, so results are
    // independent of the fan-out
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < padded.size();
             i = next.fetch_add(1))
          scores[i] = evaluate(padded[i]);
      });
    }
    for (std::thread& t : pool) t.join();
  }
  scores.resize(genomes.size());
  return scores;
}

}  // namespace topopt
