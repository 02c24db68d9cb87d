#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>

#include "stosched/model.hpp"

namespace stosched {

enum class MareStatus { Converged, Diverged, MaxIterations };

struct MareOptions {
  double tol = 1e-9;
  std::size_t max_iter = 100000;
  /// On Tr(X). Only a backstop before overflow: finite fixed points of
  /// strongly unstable, nearly always observed systems can exceed 1e18.
  double divergence_cap = 1e150;
  std::size_t growth_warmup = 200;
  std::size_t growth_window = 50;
  double growth_rel = 1e-6;
  /// When known, a q closer than 1e-3 above this flags near_critical.
  std::optional<double> critical_hint;
};

struct MareResult {
  MareStatus status = MareStatus::MaxIterations;
  CovMatrix X;  ///< fixed point when converged, last iterate otherwise
  std::size_t iterations = 0;
  double residual = std::numeric_limits<double>::infinity();  ///< ||g(X) - X||_F at exit
  bool near_critical = false;

  bool converged() const noexcept { return status == MareStatus::Converged; }
};

inline void check_probability(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("observation probability must lie in [0, 1]");
}

/// One step of the modified Riccati map:
/// A X A' + Q - q A X C' (C X C' + R)^{-1} C X A'.
///
/// Evaluated as A ((1 - q) X + q P+) A' + Q with the measurement-updated
/// covariance P+ in Joseph form, which stays PSD even when X spans many
/// orders of magnitude and the direct subtraction would cancel.
inline CovMatrix g_q(const LtiTarget& t, double q, const CovMatrix& x) {
  check_probability(q);
  const Matrix& a = t.A();
  if (q == 0.0) return detail::symmetrize(a * x * a.transpose() + t.Q());
  const Matrix& c = t.C();
  const Matrix xct = x * c.transpose();
  const Matrix s = c * xct + t.R();
  Eigen::LDLT<Matrix> ldlt(s);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all())
    throw NumericError("innovation covariance C X C' + R is singular");
  const Matrix gain = ldlt.solve(xct.transpose()).transpose();
  Matrix ikc = -gain * c;
  ikc.diagonal().array() += 1.0;
  const Matrix post = ikc * x * ikc.transpose() + gain * t.R() * gain.transpose();
  const Matrix mixed = q == 1.0 ? post : Matrix((1.0 - q) * x + q * post);
  return detail::symmetrize(a * mixed * a.transpose() + t.Q());
}

/**
 * Fixed-point iteration X <- g_q(X) started from X0.
 *
 * Stops with Converged when ||X_{k+1} - X_k||_F <= tol (1 + ||X_k||_F),
 * Diverged when Tr(X) passes the cap or when trace increments keep growing
 * for growth_window consecutive steps past growth_warmup, MaxIterations otherwise.
 */
inline MareResult solve_mare(const LtiTarget& t, double q, const CovMatrix& x0,
                             const MareOptions& opt = {}) {
  check_probability(q);
  if (!(opt.tol > 0.0)) throw ConfigError("MARE tolerance must be positive");
  MareResult res;
  if (opt.critical_hint && q - *opt.critical_hint < 1e-3) res.near_critical = true;

  CovMatrix x = x0;
  double prev_trace = x.trace();
  double prev_increment = -1.0;
  std::size_t growth_streak = 0;
  for (std::size_t k = 1; k <= opt.max_iter; ++k) {
    CovMatrix next = g_q(t, q, x);
    const double step = (next - x).norm();
    const double tr = next.trace();
    res.iterations = k;
    res.residual = step;
    if (!std::isfinite(tr) || tr > opt.divergence_cap) {
      res.status = MareStatus::Diverged;
      res.X = std::move(next);
      return res;
    }
    if (step <= opt.tol * (1.0 + x.norm())) {
      res.status = MareStatus::Converged;
      res.X = std::move(next);
      return res;
    }
    const double increment = tr - prev_trace;
    if (k > opt.growth_warmup && increment > opt.growth_rel * std::abs(prev_trace) &&
        increment >= prev_increment) {
      if (++growth_streak >= opt.growth_window) {
        res.status = MareStatus::Diverged;
        res.X = std::move(next);
        return res;
      }
    } else {
      growth_streak = 0;
    }
    prev_increment = increment;
    prev_trace = tr;
    x = std::move(next);
  }
  res.status = MareStatus::MaxIterations;
  res.X = std::move(x);
  return res;
}

/// Same as above, started from X0 = Q.
inline MareResult solve_mare(const LtiTarget& t, double q, const MareOptions& opt = {}) {
  return solve_mare(t, q, t.Q(), opt);
}

/**
 * Whether the fixed point at q exists and its cost Tr(W X) is within budget.
 *
 * Starting from Q = g_q(0) the iterates increase monotonically in the PSD
 * order, so the first iterate whose cost exceeds the budget settles the
 * answer without waiting for convergence.
 */
inline bool fixed_point_within_budget(const LtiTarget& t, double q, double budget,
                                      const MareOptions& opt = {},
                                      std::size_t* iterations = nullptr) {
  check_probability(q);
  CovMatrix x = t.Q();
  std::size_t k = 0;
  bool ok = false;
  for (k = 1; k <= opt.max_iter; ++k) {
    CovMatrix next = g_q(t, q, x);
    const double cost = target_cost(t, next);
    if (!std::isfinite(cost) || cost > budget || next.trace() > opt.divergence_cap) break;
    if ((next - x).norm() <= opt.tol * (1.0 + x.norm())) {
      ok = true;
      break;
    }
    x = std::move(next);
  }
  if (iterations) *iterations = std::min(k, opt.max_iter);
  return ok;
}

/// Closed-form fixed point for an expanded delay chain; nullopt when the MARE diverges.
inline std::optional<CovMatrix> closed_form_delay_chain(const DelayChainSpec& spec, double q) {
  spec.validate();
  check_probability(q);
  const int n = spec.state_dim();
  const double a = spec.a, qn = spec.q, r = spec.r;
  const double a2 = a * a;
  CovMatrix x(n, n);

  if (a == 1.0) {
    if (q == 0.0) return std::nullopt;
    const double x1 = (qn + std::sqrt(qn * qn + 4.0 * q * qn * r)) / (2.0 * q);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) x(i, j) = x1 + std::min(i, j) * qn;
    return x;
  }

  // Divergent iff a^2 (1 - q) >= 1.
  if (a2 * (1.0 - q) >= 1.0) return std::nullopt;

  const double b = r * a2 - r + qn;
  const double disc = b * b - 4.0 * (a2 - 1.0 - a2 * q) * qn * r;
  const double x1 = (b + std::sqrt(disc)) / (2.0 * (1.0 + a2 * q - a2));
  Vector diag(n);
  double a_pow = 1.0;  // a^{2(j-1)}
  double geo = 0.0;    // sum_{k<j-1} a^{2k}
  for (int j = 0; j < n; ++j) {
    diag(j) = a_pow * x1 + geo * qn;
    geo += a_pow;
    a_pow *= a2;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int lo = std::min(i, j);
      x(i, j) = std::pow(a, std::abs(i - j)) * diag(lo);
    }
  return x;
}

struct CriticalProbability {
  double value = 0.0;
  bool feasible = true;  ///< false when even q = 1 diverges
};

/**
 * Critical observation probability: 0 when rho(A) <= 1, otherwise a bisection
 * estimate with "solve_mare converges" as the predicate, to width tol.
 * Returns the upper (convergent) end of the final bracket.
 */
inline CriticalProbability critical_probability(const LtiTarget& t, double tol = 1e-6,
                                                const MareOptions& opt = {}) {
  if (!(tol > 0.0)) throw ConfigError("critical probability tolerance must be positive");
  if (detail::spectral_radius(t.A()) <= 1.0) return {0.0, true};
  auto converges = [&](double q) { return solve_mare(t, q, opt).converged(); };
  if (!converges(1.0)) return {1.0, false};
  double lo = 0.0, hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (converges(mid) ? hi : lo) = mid;
  }
  return {hi, true};
}

}  // namespace stosched
