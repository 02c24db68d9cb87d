#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "stosched/mare.hpp"
#include "stosched/model.hpp"

namespace stosched {

/// Optional per-target floors on q (priorities) and measurement-loss rates.
struct Constraints {
  std::vector<double> priorities;  ///< empty = none; else alpha_i in [0, 1], sum <= 1
  std::vector<double> loss;        ///< empty = none; else tau_i in [0, 1)

  double priority(std::size_t i) const { return priorities.empty() ? 0.0 : priorities[i]; }
  double loss_rate(std::size_t i) const { return loss.empty() ? 0.0 : loss[i]; }

  void validate(std::size_t n_targets) const {
    if (!priorities.empty()) {
      if (priorities.size() != n_targets)
        throw ConfigError("priorities must have one entry per target");
      double s = 0.0;
      for (double a : priorities) {
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("priority outside [0, 1]");
        s += a;
      }
      if (s > 1.0 + 1e-12) throw ConfigError("priorities sum to more than 1");
    }
    if (!loss.empty()) {
      if (loss.size() != n_targets) throw ConfigError("loss must have one entry per target");
      for (double t : loss)
        if (!(t >= 0.0 && t < 1.0)) throw ConfigError("loss rate outside [0, 1)");
    }
  }
};

struct SolverOptions {
  double outer_tol = 1e-3;  ///< on gamma
  double inner_tol = 1e-5;  ///< on q
  double critical_tol = 1e-7;
  MareOptions mare{};
};

/// Per-target inputs to the inner problem.
struct InnerProblem {
  double critical = 0.0;  ///< q^c of the target (in effective-probability units)
  double loss = 0.0;
};

struct BudgetProbability {
  double q = 1.0;
  bool feasible = false;  ///< false: even q = 1 misses the budget, q reported as 1
  std::size_t bisection_steps = 0;
};

/**
 * Least q in (q^c/(1 - tau), 1] whose fixed point meets Tr(W X(q (1 - tau))) <= gamma.
 * Infeasible budgets return q = 1 with feasible = false.
 */
inline BudgetProbability min_probability_for_budget(const LtiTarget& t, double gamma, double tol,
                                                    const InnerProblem& inner,
                                                    const MareOptions& mare = {}) {
  if (!(gamma > 0.0)) throw ConfigError("budget gamma must be positive");
  if (!(tol > 0.0)) throw ConfigError("inner tolerance must be positive");
  const double keep = 1.0 - inner.loss;
  auto meets = [&](double q) { return fixed_point_within_budget(t, q * keep, gamma, mare); };

  BudgetProbability out;
  if (!meets(1.0)) return out;
  out.feasible = true;
  double lo = std::min(inner.critical / keep, 1.0);
  double hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (meets(mid) ? hi : lo) = mid;
    ++out.bisection_steps;
  }
  out.q = hi;
  return out;
}

inline BudgetProbability min_probability_for_budget(const LtiTarget& t, double gamma, double tol,
                                                    const MareOptions& mare = {}) {
  return min_probability_for_budget(
      t, gamma, tol, InnerProblem{critical_probability(t, 1e-7, mare).value, 0.0}, mare);
}

struct MuEvaluation {
  double mu = 0.0;
  std::vector<double> q;  ///< per-target inner solutions after priority clamping
  std::vector<std::size_t> bisection_steps;
  bool all_feasible = true;
};

/// mu(gamma) with the inner problems already set up; priorities clamp q_i >= alpha_i.
inline MuEvaluation evaluate_mu(const std::vector<LtiTarget>& targets,
                                const std::vector<InnerProblem>& inner,
                                const Constraints& cons, double gamma, double tol,
                                const MareOptions& mare = {}) {
  MuEvaluation ev;
  ev.q.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto bp = min_probability_for_budget(targets[i], gamma, tol, inner[i], mare);
    ev.q.push_back(std::max(bp.q, cons.priority(i)));
    ev.bisection_steps.push_back(bp.bisection_steps);
    ev.all_feasible = ev.all_feasible && bp.feasible;
  }
  ev.mu = std::accumulate(ev.q.begin(), ev.q.end(), 0.0);
  return ev;
}

inline std::vector<InnerProblem> setup_inner_problems(const std::vector<LtiTarget>& targets,
                                                      const Constraints& cons,
                                                      const SolverOptions& opt) {
  std::vector<InnerProblem> inner;
  inner.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    inner.push_back({critical_probability(targets[i], opt.critical_tol, opt.mare).value,
                     cons.loss_rate(i)});
  return inner;
}

/// Sum over targets of the minimal probability meeting budget gamma.
inline double mu_of_gamma(const std::vector<LtiTarget>& targets, double gamma, double tol,
                          const MareOptions& mare = {}) {
  SolverOptions opt;
  opt.mare = mare;
  const Constraints none;
  return evaluate_mu(targets, setup_inner_problems(targets, none, opt), none, gamma, tol, mare).mu;
}

struct GammaBracket {
  double lo = 0.0;
  double hi = 0.0;
};

/// Cost of target i's fixed point at raw probability q (loss applied); +inf if it diverges.
inline double fixed_point_cost(const LtiTarget& t, double q, double loss, const MareOptions& mare) {
  const auto res = solve_mare(t, q * (1.0 - loss), mare);
  if (!res.converged()) return std::numeric_limits<double>::infinity();
  return target_cost(t, res.X);
}

/**
 * lo = max_i cost at q_i = 1 (each target's best case), hi = max_i cost at the
 * uniform feasible split q_i = qc_i + (1 - sum qc) / N. hi is doubled until
 * mu(hi) <= 1 to absorb inner-bisection slack.
 */
inline GammaBracket bracket_gamma(const std::vector<LtiTarget>& targets,
                                  const std::vector<InnerProblem>& inner, const Constraints& cons,
                                  const SolverOptions& opt) {
  const std::size_t n = targets.size();
  if (n == 0) throw ConfigError("no targets");
  // Floors: q_i must exceed qc_i / (1 - tau_i) strictly and reach alpha_i.
  std::vector<double> qc(n);
  double qc_sum = 0.0;
  bool strict = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double crit = inner[i].critical / (1.0 - inner[i].loss);
    qc[i] = std::max(crit, cons.priority(i));
    strict = strict || (crit > 0.0 && crit >= cons.priority(i));
    qc_sum += qc[i];
  }
  if (n > 1 && (qc_sum > 1.0 + 1e-12 || (qc_sum >= 1.0 && strict)))
    throw InfeasibleError("sum of critical probabilities (loss- and priority-adjusted) is " +
                          std::to_string(qc_sum) + ", need < 1");

  GammaBracket b;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = fixed_point_cost(targets[i], 1.0, inner[i].loss, opt.mare);
    if (!std::isfinite(c))
      throw InfeasibleError("target " + std::to_string(i) + " diverges even when always observed");
    b.lo = std::max(b.lo, c);
  }
  if (n == 1) {
    b.hi = b.lo;
    return b;
  }
  const double share = (1.0 - qc_sum) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = fixed_point_cost(targets[i], qc[i] + share, inner[i].loss, opt.mare);
    b.hi = std::max(b.hi, std::isfinite(c) ? c : 2.0 * opt.mare.divergence_cap);
  }
  b.hi = std::max(b.hi, b.lo);
  for (int tries = 0; tries < 64; ++tries) {
    if (evaluate_mu(targets, inner, cons, b.hi, opt.inner_tol, opt.mare).mu <= 1.0) return b;
    b.hi *= 2.0;
  }
  throw InfeasibleError("could not find a feasible upper budget");
}

struct TargetSolution {
  double q = 0.0;
  double cost = 0.0;        ///< Tr(W X(q)) at the returned q
  double q_critical = 0.0;  ///< critical probability of the target itself
};

struct SolveReport {
  bool feasible = false;
  double gamma_star = std::numeric_limits<double>::infinity();
  std::vector<double> q_star;
  std::vector<TargetSolution> per_target;
  double mu_at_gamma = 0.0;  ///< mu(gamma_star) before rescaling to sum 1
  std::size_t outer_iterations = 0;
  std::vector<std::size_t> inner_iterations;  ///< total inner bisection steps per target
  std::string diagnostic;

  ScheduleDistribution distribution() const { return ScheduleDistribution(q_star); }
  double max_cost() const {
    double m = 0.0;
    for (const auto& p : per_target) m = std::max(m, p.cost);
    return m;
  }
};

/**
 * Finishes a solve at the feasible endpoint gamma: rescale the inner solution
 * by 1/mu so it sums to 1 and evaluate each target there. Shared with the
 * distributed solver.
 */
inline void finalize_report(SolveReport& rep, const std::vector<LtiTarget>& targets,
                            const std::vector<InnerProblem>& inner, const Constraints& cons,
                            std::vector<double> q, double gamma, const MareOptions& mare) {
  const double mu = std::accumulate(q.begin(), q.end(), 0.0);
  rep.mu_at_gamma = mu;
  rep.gamma_star = gamma;
  for (double& v : q) v /= mu;
  // Renormalize once more so the sum is 1 to rounding.
  const double s = std::accumulate(q.begin(), q.end(), 0.0);
  for (double& v : q) v = std::min(1.0, v / s);
  rep.q_star = q;
  rep.per_target.clear();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    TargetSolution ts;
    ts.q = q[i];
    ts.cost = fixed_point_cost(targets[i], q[i], cons.loss_rate(i), mare);
    ts.q_critical = inner[i].critical;
    rep.per_target.push_back(ts);
  }
  rep.feasible = true;
}

/**
 * Minimize max_i Tr(W_i X_i(q_i)) subject to sum q_i = 1 by bisection on the
 * budget gamma, keeping mu(hi) <= 1 <= mu(lo).
 *
 * Infeasible problems come back with feasible = false and a diagnostic.
 */
inline SolveReport solve_op(const std::vector<LtiTarget>& targets, const Constraints& cons = {},
                            const SolverOptions& opt = {}) {
  SolveReport rep;
  if (targets.empty()) throw ConfigError("no targets");
  cons.validate(targets.size());
  if (!(opt.outer_tol > 0.0) || !(opt.inner_tol > 0.0))
    throw ConfigError("solver tolerances must be positive");

  const auto inner = setup_inner_problems(targets, cons, opt);
  rep.inner_iterations.assign(targets.size(), 0);

  GammaBracket b;
  try {
    b = bracket_gamma(targets, inner, cons, opt);
  } catch (const InfeasibleError& e) {
    rep.diagnostic = e.what();
    for (const auto& in : inner) rep.per_target.push_back({0.0, 0.0, in.critical});
    return rep;
  }

  if (targets.size() == 1) {
    finalize_report(rep, targets, inner, cons, {1.0}, b.hi, opt.mare);
    return rep;
  }

  MuEvaluation at_hi = evaluate_mu(targets, inner, cons, b.hi, opt.inner_tol, opt.mare);
  while (b.hi - b.lo > opt.outer_tol) {
    const double mid = 0.5 * (b.lo + b.hi);
    MuEvaluation ev = evaluate_mu(targets, inner, cons, mid, opt.inner_tol, opt.mare);
    for (std::size_t i = 0; i < targets.size(); ++i)
      rep.inner_iterations[i] += ev.bisection_steps[i];
    ++rep.outer_iterations;
    if (ev.mu <= 1.0) {
      b.hi = mid;
      at_hi = std::move(ev);
    } else {
      b.lo = mid;
    }
  }
  finalize_report(rep, targets, inner, cons, at_hi.q, b.hi, opt.mare);
  return rep;
}

}  // namespace stosched
