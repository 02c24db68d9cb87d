#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "stosched/detail/random.hpp"
#include "stosched/mare.hpp"
#include "stosched/model.hpp"
#include "stosched/schedule.hpp"

namespace stosched {

/// Error covariance after one step: g_1 when observed, g_0 (open loop) when not.
inline CovMatrix covariance_step(const LtiTarget& t, const CovMatrix& p, bool observed) {
  return g_q(t, observed ? 1.0 : 0.0, p);
}

/// Predicted state estimate and covariance, x_hat[k|k-1] and P[k|k-1].
struct FilterState {
  Vector x_hat;
  CovMatrix P;
};

/**
 * Measurement update (when y is present) followed by the time update.
 * The returned covariance is exactly covariance_step(t, state.P, y.has_value()).
 * If posterior is non-null it receives x_hat[k|k].
 */
inline FilterState kalman_step(const LtiTarget& t, const FilterState& state,
                               const std::optional<Vector>& y, Vector* posterior = nullptr) {
  if (state.x_hat.size() != t.state_dim() || state.P.rows() != t.state_dim())
    throw ConfigError("filter state dimension does not match target");
  Vector x_post = state.x_hat;
  if (y) {
    if (y->size() != t.output_dim()) throw ConfigError("measurement dimension does not match C");
    const Matrix pct = state.P * t.C().transpose();
    const Matrix s = t.C() * pct + t.R();
    const Matrix gain = s.ldlt().solve(pct.transpose()).transpose();
    x_post += gain * (*y - t.C() * state.x_hat);
  }
  if (posterior) *posterior = x_post;
  return {t.A() * x_post, covariance_step(t, state.P, y.has_value())};
}

struct CostReport {
  std::vector<double> per_target_avg;  ///< time-averaged Tr(W P_i[k]) after burn-in
  double max_over_targets = 0.0;
  std::size_t steps_averaged = 0;
  Matrix trace_series;  ///< steps x targets, filled only when requested
};

struct EvaluateOptions {
  std::size_t cycles = 1;              ///< repeat the sequence this many times
  std::optional<std::size_t> burn_in;  ///< default min(T/5, 200)
  bool record_series = false;
};

inline std::size_t default_burn_in(std::size_t total_steps) {
  return std::min<std::size_t>(total_steps / 5, 200);
}

inline std::vector<CovMatrix> default_initial_covariances(const std::vector<LtiTarget>& targets) {
  std::vector<CovMatrix> p0;
  p0.reserve(targets.size());
  for (const auto& t : targets) p0.push_back(t.Q());
  return p0;
}

/**
 * Deterministic cost of a schedule: propagate each covariance with
 * covariance_step (observed iff seq[k] == i) and average Tr(W P_i[k]) over the
 * steps after burn-in. P_i[k] is the covariance after the k-th step.
 */
inline CostReport evaluate_schedule(const std::vector<LtiTarget>& targets,
                                    const ScheduleSequence& seq, const std::vector<CovMatrix>& p0,
                                    const EvaluateOptions& opt = {}) {
  const std::size_t n = targets.size();
  if (seq.n_targets != n) throw ConfigError("schedule target count does not match");
  if (p0.size() != n) throw ConfigError("one initial covariance per target required");
  if (seq.size() == 0 || opt.cycles == 0) throw ConfigError("empty schedule");
  seq.validate();
  const std::size_t total = seq.size() * opt.cycles;
  const std::size_t burn = opt.burn_in ? *opt.burn_in : default_burn_in(total);
  if (burn >= total) throw ConfigError("burn-in covers the whole schedule");

  CostReport rep;
  rep.per_target_avg.assign(n, 0.0);
  rep.steps_averaged = total - burn;
  if (opt.record_series)
    rep.trace_series.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(n));
  std::vector<CovMatrix> p = p0;
  for (std::size_t k = 0; k < total; ++k) {
    const std::size_t s = seq[k % seq.size()];
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = covariance_step(targets[i], p[i], s == i);
      const double c = target_cost(targets[i], p[i]);
      if (k >= burn) rep.per_target_avg[i] += c;
      if (opt.record_series) rep.trace_series(k, i) = c;
    }
  }
  for (auto& v : rep.per_target_avg) v /= static_cast<double>(rep.steps_averaged);
  rep.max_over_targets = *std::max_element(rep.per_target_avg.begin(), rep.per_target_avg.end());
  return rep;
}

struct MonteCarloOptions {
  double tail_fraction = 0.2;       ///< steady-state window: last 20% of steps
  bool record_mean_series = false;  ///< per-step mean cost across runs
};

struct MonteCarloReport {
  std::vector<double> per_target_mean;  ///< mean cost over the tail window and runs
  std::vector<double> per_target_half_width;  ///< 95% half-width across runs
  double max_over_targets = 0.0;
  /// Per run: max over targets of the burn-in time average; then mean across runs.
  double mean_time_avg_max = 0.0;
  double time_avg_max_half_width = 0.0;
  std::size_t runs = 0;
  std::size_t steps = 0;
  Matrix mean_series;  ///< steps x targets, when requested
};

/**
 * Expected cost under i.i.d. scheduling with distribution q, estimated from
 * `runs` independent schedules. Run r uses seed derive_seed(seed, r); results
 * are accumulated in run order.
 */
inline MonteCarloReport monte_carlo_expected_cost(const std::vector<LtiTarget>& targets,
                                                  const ScheduleDistribution& q, std::size_t steps,
                                                  std::size_t runs, std::uint64_t seed,
                                                  const MonteCarloOptions& opt = {}) {
  const std::size_t n = targets.size();
  if (q.size() != n) throw ConfigError("distribution size does not match targets");
  if (steps == 0 || runs == 0) throw ConfigError("Monte Carlo needs steps >= 1 and runs >= 1");
  const std::size_t tail = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(opt.tail_fraction * static_cast<double>(steps))));
  const std::size_t tail_start = steps - std::min(tail, steps);
  const std::size_t burn = default_burn_in(steps);

  MonteCarloReport rep;
  rep.runs = runs;
  rep.steps = steps;
  std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
  double max_sum = 0.0, max_sum_sq = 0.0;
  if (opt.record_mean_series)
    rep.mean_series = Matrix::Zero(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(n));

  const auto p0 = default_initial_covariances(targets);
  std::vector<double> tail_avg(n), time_avg(n);
  for (std::size_t r = 0; r < runs; ++r) {
    const auto seq = sample_stochastic_schedule(q, steps, detail::derive_seed(seed, r));
    std::vector<CovMatrix> p = p0;
    std::fill(tail_avg.begin(), tail_avg.end(), 0.0);
    std::fill(time_avg.begin(), time_avg.end(), 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = covariance_step(targets[i], p[i], seq[k] == i);
        const double c = target_cost(targets[i], p[i]);
        if (k >= tail_start) tail_avg[i] += c;
        if (k >= burn) time_avg[i] += c;
        if (opt.record_mean_series) rep.mean_series(k, i) += c;
      }
    }
    double run_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      tail_avg[i] /= static_cast<double>(steps - tail_start);
      time_avg[i] /= static_cast<double>(steps - burn);
      sum[i] += tail_avg[i];
      sum_sq[i] += tail_avg[i] * tail_avg[i];
      run_max = std::max(run_max, time_avg[i]);
    }
    max_sum += run_max;
    max_sum_sq += run_max * run_max;
  }

  const double dr = static_cast<double>(runs);
  auto half_width = [&](double s, double s2) {
    if (runs < 2) return std::numeric_limits<double>::infinity();
    const double var = std::max(0.0, (s2 - s * s / dr) / (dr - 1.0));
    return 1.96 * std::sqrt(var / dr);
  };
  for (std::size_t i = 0; i < n; ++i) {
    rep.per_target_mean.push_back(sum[i] / dr);
    rep.per_target_half_width.push_back(half_width(sum[i], sum_sq[i]));
  }
  rep.max_over_targets = *std::max_element(rep.per_target_mean.begin(), rep.per_target_mean.end());
  rep.mean_time_avg_max = max_sum / dr;
  rep.time_avg_max_half_width = half_width(max_sum, max_sum_sq);
  if (opt.record_mean_series) rep.mean_series /= dr;
  return rep;
}

struct SlidingWindowResult {
  ScheduleSequence sequence;
  CostReport cost;
  std::size_t nodes_expanded = 0;
};

inline constexpr double kMaxWindowLeaves = 1e6;

/// How a window of future covariances is scored (lower is better).
enum class WindowScore {
  WindowAverageMax,  ///< max over targets of the window-averaged cost
  SumOfStepMax,      ///< sum over window steps of the max over targets
  TerminalMax,       ///< max over targets at the end of the window only
};

namespace detail {

// Allocation-free covariance steps for the tree search.
class CovStepper {
 public:
  explicit CovStepper(const LtiTarget& t) : t_(t) {
    const auto n = t.state_dim();
    ax_.resize(n, n);
    cxa_.resize(t.output_dim(), n);
    s_.resize(t.output_dim(), t.output_dim());
    tmp_.resize(t.output_dim(), n);
  }

  void step(const CovMatrix& p, bool observed, CovMatrix& out) {
    ax_.noalias() = t_.A() * p;
    out.noalias() = ax_ * t_.A().transpose();
    out += t_.Q();
    if (observed) {
      cxa_.noalias() = t_.C() * ax_.transpose();
      s_.noalias() = t_.C() * p * t_.C().transpose();
      s_ += t_.R();
      llt_.compute(s_);
      tmp_ = llt_.solve(cxa_);
      out.noalias() -= cxa_.transpose() * tmp_;
    }
    out = 0.5 * (out + out.transpose()).eval();
  }

  double cost(const CovMatrix& p) const { return target_cost(t_, p); }

 private:
  const LtiTarget& t_;
  Matrix ax_, cxa_, s_, tmp_;
  Eigen::LLT<Matrix> llt_;
};

class WindowSearch {
 public:
  WindowSearch(const std::vector<LtiTarget>& targets, std::size_t window, WindowScore score)
      : window_(window), n_(targets.size()), score_(score) {
    for (const auto& t : targets) steppers_.emplace_back(t);
    levels_.assign(window + 1, {});
    for (auto& lvl : levels_)
      for (const auto& t : targets) lvl.push_back(CovMatrix::Zero(t.state_dim(), t.state_dim()));
    acc_.assign(window + 1, std::vector<double>(n_, 0.0));
  }

  // Returns the first element of the best window sequence.
  std::size_t best_first(const std::vector<CovMatrix>& p) {
    levels_[0] = p;
    best_score_ = std::numeric_limits<double>::infinity();
    best_first_ = 0;
    descend(0, 0);
    return best_first_;
  }

  std::size_t nodes() const noexcept { return nodes_; }

 private:
  double partial(std::size_t depth) const {
    if (score_ == WindowScore::SumOfStepMax) return acc_[depth][0];
    return *std::max_element(acc_[depth].begin(), acc_[depth].end());
  }

  // acc_[d][i]: running score of target i along the current path down to depth d.
  void descend(std::size_t depth, std::size_t first) {
    if (depth == window_) {
      double score = 0.0;
      for (std::size_t i = 0; i < n_; ++i) score = std::max(score, acc_[depth][i]);
      if (score_ == WindowScore::SumOfStepMax) score = acc_[depth][0];
      if (score < best_score_) {
        best_score_ = score;
        best_first_ = first;
      }
      return;
    }
    for (std::size_t choice = 0; choice < n_; ++choice) {
      ++nodes_;
      double step_max = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        steppers_[i].step(levels_[depth][i], choice == i, levels_[depth + 1][i]);
        const double c = steppers_[i].cost(levels_[depth + 1][i]);
        step_max = std::max(step_max, c);
        switch (score_) {
          case WindowScore::WindowAverageMax: acc_[depth + 1][i] = acc_[depth][i] + c; break;
          case WindowScore::TerminalMax: acc_[depth + 1][i] = c; break;
          case WindowScore::SumOfStepMax: break;
        }
      }
      if (score_ == WindowScore::SumOfStepMax) acc_[depth + 1][0] = acc_[depth][0] + step_max;
      // Running scores only grow along a path, so a partial score that already
      // matches the best cannot win (ties keep the earlier sequence).
      if (score_ != WindowScore::TerminalMax && partial(depth + 1) >= best_score_) continue;
      descend(depth + 1, depth == 0 ? choice : first);
    }
  }

  std::size_t window_, n_;
  WindowScore score_;
  std::vector<CovStepper> steppers_;
  std::vector<std::vector<double>> acc_;
  std::vector<std::vector<CovMatrix>> levels_;
  double best_score_ = 0.0;
  std::size_t best_first_ = 0;
  std::size_t nodes_ = 0;
};

}  // namespace detail

/**
 * Receding-horizon tree search: at each step search all N^window observation
 * sequences, score each with `score` (by default the window sum of the
 * per-step worst target cost), commit the first element of the best (first
 * found on ties) and slide by one. Branches whose running score already
 * reaches the best are pruned; the result equals full enumeration.
 */
inline SlidingWindowResult sliding_window_schedule(const std::vector<LtiTarget>& targets,
                                                   std::size_t window, std::size_t steps,
                                                   const std::vector<CovMatrix>& p0,
                                                   WindowScore score = WindowScore::SumOfStepMax,
                                                   const EvaluateOptions& eval = {}) {
  const std::size_t n = targets.size();
  if (n == 0) throw ConfigError("no targets");
  if (window == 0) throw ConfigError("window must be >= 1");
  if (steps == 0) throw ConfigError("steps must be >= 1");
  if (p0.size() != n) throw ConfigError("one initial covariance per target required");
  if (std::pow(static_cast<double>(n), static_cast<double>(window)) > kMaxWindowLeaves)
    throw ConfigError("N^window exceeds 1e6 leaves; use a smaller window");

  detail::WindowSearch search(targets, window, score);
  std::vector<detail::CovStepper> steppers;
  for (const auto& t : targets) steppers.emplace_back(t);

  SlidingWindowResult out;
  out.sequence.n_targets = n;
  out.sequence.steps.reserve(steps);
  std::vector<CovMatrix> p = p0, next = p0;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t choice = search.best_first(p);
    out.sequence.steps.push_back(choice);
    for (std::size_t i = 0; i < n; ++i) steppers[i].step(p[i], choice == i, next[i]);
    std::swap(p, next);
  }
  out.nodes_expanded = search.nodes();
  out.cost = evaluate_schedule(targets, out.sequence, p0, eval);
  return out;
}

struct TrackingRun {
  Matrix truth;      ///< steps x targets, tracked component of the true state
  Matrix estimate;   ///< steps x targets, same component of x_hat[k|k]
  std::vector<std::size_t> tracked_component;
};

/// Component reported for tracking plots: the most heavily weighted diagonal entry of W.
inline std::size_t tracked_component(const LtiTarget& t) {
  Eigen::Index idx = 0;
  t.cost_weight().diagonal().maxCoeff(&idx);
  return static_cast<std::size_t>(idx);
}

/// Full Kalman filtering along a schedule with sampled process and measurement noise.
inline TrackingRun simulate_tracking(const std::vector<LtiTarget>& targets,
                                     const ScheduleSequence& seq, std::uint64_t seed) {
  const std::size_t n = targets.size();
  if (seq.n_targets != n) throw ConfigError("schedule target count does not match");
  seq.validate();
  std::mt19937_64 rng(seed);
  auto gaussian = [&](const Matrix& root) {
    Vector z(root.cols());
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = detail::standard_normal(rng);
    return Vector(root * z);
  };

  std::vector<Matrix> q_root, r_root;
  std::vector<Vector> x;
  std::vector<FilterState> filt;
  TrackingRun run;
  for (const auto& t : targets) {
    q_root.push_back(detail::psd_sqrt(t.Q()));
    r_root.push_back(detail::psd_sqrt(t.R()));
    x.push_back(gaussian(q_root.back()));
    filt.push_back({Vector::Zero(t.state_dim()), t.Q()});
    run.tracked_component.push_back(tracked_component(t));
  }
  run.truth.resize(static_cast<Eigen::Index>(seq.size()), static_cast<Eigen::Index>(n));
  run.estimate.resize(static_cast<Eigen::Index>(seq.size()), static_cast<Eigen::Index>(n));
  Vector post;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& t = targets[i];
      std::optional<Vector> y;
      if (seq[k] == i) y = Vector(t.C() * x[i] + gaussian(r_root[i]));
      filt[i] = kalman_step(t, filt[i], y, &post);
      const auto c = static_cast<Eigen::Index>(run.tracked_component[i]);
      run.truth(k, i) = x[i](c);
      run.estimate(k, i) = post(c);
      x[i] = t.A() * x[i] + gaussian(q_root[i]);
    }
  }
  return run;
}

}  // namespace stosched
