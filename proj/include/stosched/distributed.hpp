#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "stosched/errors.hpp"
#include "stosched/optimizer.hpp"

namespace stosched {

/// Connected undirected communication graph with Metropolis-Hastings weights.
class Topology {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  Topology(std::size_t n_nodes, const std::vector<Edge>& edges) : n_(n_nodes) {
    if (n_ == 0) throw ConfigError("topology needs at least one node");
    for (auto [u, v] : edges) {
      if (u >= n_ || v >= n_) throw ConfigError("topology edge references unknown node");
      if (u == v) continue;
      edges_.insert({std::min(u, v), std::max(u, v)});
    }
    if (!connected()) throw ConfigError("topology is not connected");
    build_weights();
  }

  /// Adjacency list: entry i lists neighbours of node i (symmetrized).
  static Topology from_adjacency(const std::vector<std::vector<std::size_t>>& adj) {
    std::vector<Edge> e;
    for (std::size_t i = 0; i < adj.size(); ++i)
      for (std::size_t j : adj[i]) e.emplace_back(i, j);
    return Topology(adj.size(), e);
  }
  static Topology complete(std::size_t n) {
    std::vector<Edge> e;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) e.emplace_back(i, j);
    return Topology(n, e);
  }
  static Topology line(std::size_t n) {
    std::vector<Edge> e;
    for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    return Topology(n, e);
  }
  static Topology ring(std::size_t n) {
    std::vector<Edge> e;
    for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    if (n > 2) e.emplace_back(n - 1, 0);
    return Topology(n, e);
  }

  std::size_t n_nodes() const noexcept { return n_; }
  const std::set<Edge>& edges() const noexcept { return edges_; }
  const Matrix& weights() const noexcept { return w_; }
  std::size_t degree(std::size_t i) const { return neighbours_[i].size(); }
  const std::vector<std::size_t>& neighbours(std::size_t i) const { return neighbours_[i]; }

 private:
  bool connected() {
    neighbours_.assign(n_, {});
    for (auto [u, v] : edges_) {
      neighbours_[u].push_back(v);
      neighbours_[v].push_back(u);
    }
    std::vector<bool> seen(n_, false);
    std::queue<std::size_t> todo;
    todo.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!todo.empty()) {
      const auto u = todo.front();
      todo.pop();
      for (auto v : neighbours_[u])
        if (!seen[v]) {
          seen[v] = true;
          ++count;
          todo.push(v);
        }
    }
    return count == n_;
  }

  void build_weights() {
    w_ = Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (auto [u, v] : edges_) {
      const double wij = 1.0 / (1.0 + static_cast<double>(std::max(degree(u), degree(v))));
      w_(u, v) = wij;
      w_(v, u) = wij;
    }
    for (std::size_t i = 0; i < n_; ++i) w_(i, i) = 1.0 - w_.row(i).sum();
  }

  std::size_t n_;
  std::set<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighbours_;
  Matrix w_;
};

struct ConsensusResult {
  Matrix values;  ///< row i = node i's estimate of the mean vector
  std::size_t rounds = 0;
  double residual = 0.0;  ///< max |x_i - mean| over nodes and components
};

/// Synchronous rounds x <- W x on per-node vectors (rows) until every node is within tol of the mean.
inline ConsensusResult average_consensus(const Matrix& values, const Topology& topo, double tol,
                                         std::size_t max_rounds) {
  if (static_cast<std::size_t>(values.rows()) != topo.n_nodes())
    throw ConfigError("consensus: one row of values per node required");
  const Eigen::RowVectorXd mean = values.colwise().mean();
  auto deviation = [&](const Matrix& x) {
    return (x.rowwise() - mean).cwiseAbs().maxCoeff();
  };
  ConsensusResult out{values, 0, deviation(values)};
  while (out.residual > tol) {
    if (out.rounds >= max_rounds)
      throw ProtocolError("average consensus did not reach tolerance within " +
                              std::to_string(max_rounds) + " rounds",
                          out.residual);
    out.values = topo.weights() * out.values;
    ++out.rounds;
    out.residual = deviation(out.values);
  }
  return out;
}

inline ConsensusResult average_consensus(const std::vector<double>& values, const Topology& topo,
                                         double tol, std::size_t max_rounds) {
  Matrix m(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(i, 0) = values[i];
  return average_consensus(m, topo, tol, max_rounds);
}

/// What a single estimator holds between synchronized rounds.
struct NodeState {
  std::size_t node_id = 0;
  double lower = 0.0;
  double upper = 0.0;
  double gamma = 0.0;
  double q_local = 1.0;
  std::size_t round = 0;
};

struct DistributedOptions {
  double eps = 1e-3;  ///< stop when u - l <= eps
  double inner_tol = 1e-5;
  double consensus_tol = 1e-12;
  std::size_t max_rounds = 200000;
  std::size_t guard_rounds = 2000;
  MareOptions mare{};
  double critical_tol = 1e-7;
  std::optional<GammaBracket> bracket;  ///< initial [l, u]; derived centrally when absent
};

struct DistributedReport {
  std::vector<SolveReport> per_node;
  std::vector<std::size_t> consensus_rounds;  ///< per bisection step (plus the final gather)
  std::size_t bisection_steps = 0;
  std::size_t guard_invocations = 0;
};

/**
 * Simulated estimator network running the bisection on gamma in lockstep:
 * each node solves its own inner problem, mu(gamma) is N times the consensus
 * average of the local q's, and all nodes apply the same update to [l, u].
 *
 * Node i owns targets[i]. Nodes are stepped in index order within each round;
 * the round barrier is the only synchronization point.
 */
inline DistributedReport run_distributed_op(const std::vector<LtiTarget>& targets,
                                            const Topology& topo, const Constraints& cons = {},
                                            const DistributedOptions& opt = {}) {
  const std::size_t n = targets.size();
  if (n == 0) throw ConfigError("no targets");
  if (topo.n_nodes() != n) throw ConfigError("topology must have one node per target");
  cons.validate(n);

  SolverOptions sopt;
  sopt.outer_tol = opt.eps;
  sopt.inner_tol = opt.inner_tol;
  sopt.mare = opt.mare;
  sopt.critical_tol = opt.critical_tol;
  // Each node computes its own q^c; collected here only because the
  // simulation keeps all nodes in one process.
  const auto inner = setup_inner_problems(targets, cons, sopt);
  const GammaBracket start = opt.bracket ? *opt.bracket : bracket_gamma(targets, inner, cons, sopt);

  std::vector<NodeState> nodes(n);
  for (std::size_t i = 0; i < n; ++i) nodes[i] = {i, start.lo, start.hi, start.hi, 1.0, 0};

  DistributedReport rep;
  const double dn = static_cast<double>(n);
  auto local_q = [&](std::size_t i, double gamma) {
    const auto bp = min_probability_for_budget(targets[i], gamma, opt.inner_tol, inner[i], opt.mare);
    return std::max(bp.q, cons.priority(i));
  };

  while (nodes[0].upper - nodes[0].lower > opt.eps) {
    for (auto& nd : nodes) {
      nd.gamma = 0.5 * (nd.lower + nd.upper);
      nd.q_local = local_q(nd.node_id, nd.gamma);
    }
    std::vector<double> qs(n);
    for (std::size_t i = 0; i < n; ++i) qs[i] = nodes[i].q_local;
    ConsensusResult cr = average_consensus(qs, topo, opt.consensus_tol, opt.max_rounds);
    std::size_t rounds = cr.rounds;

    // Borderline mu: keep averaging so no node branches on rounding noise.
    auto borderline = [&] {
      for (std::size_t i = 0; i < n; ++i)
        if (std::abs(dn * cr.values(i, 0) - 1.0) <= 10.0 * dn * std::max(cr.residual, 1e-300))
          return true;
      return false;
    };
    if (borderline()) {
      ++rep.guard_invocations;
      for (std::size_t k = 0; k < opt.guard_rounds; ++k) {
        cr.values = topo.weights() * cr.values;
        ++rounds;
      }
    }

    bool first = dn * cr.values(0, 0) <= 1.0;
    for (std::size_t i = 1; i < n; ++i)
      if ((dn * cr.values(i, 0) <= 1.0) != first)
        throw ProtocolError("nodes disagree on the bisection decision", cr.residual);
    for (auto& nd : nodes) {
      (first ? nd.upper : nd.lower) = nd.gamma;
      ++nd.round;
    }
    for (std::size_t i = 1; i < n; ++i)
      if (nodes[i].lower != nodes[0].lower || nodes[i].upper != nodes[0].upper)
        throw ProtocolError("bisection bounds diverged across nodes", 0.0);
    rep.consensus_rounds.push_back(rounds);
    ++rep.bisection_steps;
  }

  // Final gather at the feasible endpoint: consensus on e_i q_i yields q / N at every node.
  Matrix gather = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].gamma = nodes[i].upper;
    nodes[i].q_local = n == 1 ? 1.0 : local_q(i, nodes[i].gamma);
    gather(i, i) = nodes[i].q_local;
  }
  const ConsensusResult cr = average_consensus(gather, topo, opt.consensus_tol, opt.max_rounds);
  rep.consensus_rounds.push_back(cr.rounds);

  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> q(n);
    for (std::size_t j = 0; j < n; ++j) q[j] = std::max(0.0, dn * cr.values(i, j));
    SolveReport sr;
    sr.outer_iterations = rep.bisection_steps;
    sr.inner_iterations.assign(n, 0);
    finalize_report(sr, targets, inner, cons, std::move(q), nodes[i].upper, opt.mare);
    rep.per_node.push_back(std::move(sr));
  }
  return rep;
}

}  // namespace stosched
