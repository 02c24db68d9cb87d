#pragma once

#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stosched/detail/linalg.hpp"
#include "stosched/errors.hpp"

namespace stosched {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetric positive-semidefinite matrix (error covariances, Riccati fixed points).
using CovMatrix = Eigen::MatrixXd;

/// Tolerances a CovMatrix has to satisfy.
inline bool is_cov_matrix(const CovMatrix& m) {
  return detail::is_symmetric(m, 1e-10) && detail::is_psd(m, 1e-9);
}

/**
 * One observed target: x[k+1] = A x[k] + w[k], y[k] = C x[k] + v[k],
 * with cov(w) = Q and cov(v) = R.
 *
 * The scheduling cost of a covariance P is Tr(W P). W is the identity unless
 * the target only cares about part of its state (delay-chain expansions set
 * W to select the current, undelayed state).
 *
 * Construction checks dimensions only; semantic checks live in validate_target().
 */
class LtiTarget {
 public:
  LtiTarget(Matrix a, Matrix c, Matrix q, Matrix r, std::string label = {},
            std::optional<Matrix> cost_weight = std::nullopt)
      : a_(std::move(a)), c_(std::move(c)), q_(std::move(q)), r_(std::move(r)),
        label_(std::move(label)) {
    const auto n = a_.rows();
    if (n == 0 || a_.cols() != n)
      throw ConfigError("target '" + label_ + "': A must be square and non-empty");
    if (c_.cols() != n || c_.rows() == 0)
      throw ConfigError("target '" + label_ + "': C must be p x n with n = dim(A)");
    if (q_.rows() != n || q_.cols() != n)
      throw ConfigError("target '" + label_ + "': Q must be n x n");
    if (r_.rows() != c_.rows() || r_.cols() != c_.rows())
      throw ConfigError("target '" + label_ + "': R must be p x p");
    w_ = cost_weight ? std::move(*cost_weight) : Matrix::Identity(n, n);
    if (w_.rows() != n || w_.cols() != n)
      throw ConfigError("target '" + label_ + "': cost weight must be n x n");
  }

  const Matrix& A() const noexcept { return a_; }
  const Matrix& C() const noexcept { return c_; }
  const Matrix& Q() const noexcept { return q_; }
  const Matrix& R() const noexcept { return r_; }
  const Matrix& cost_weight() const noexcept { return w_; }
  const std::string& label() const noexcept { return label_; }

  Eigen::Index state_dim() const noexcept { return a_.rows(); }
  Eigen::Index output_dim() const noexcept { return c_.rows(); }

  bool has_identity_cost() const { return w_.isIdentity(0.0); }

 private:
  Matrix a_, c_, q_, r_, w_;
  std::string label_;
};

/// Scheduling cost of a covariance for this target: Tr(W P).
inline double target_cost(const LtiTarget& t, const CovMatrix& p) {
  if (t.has_identity_cost()) return p.trace();
  return (t.cost_weight() * p).trace();
}

/// Scalar random walk / AR(1) target whose measurement arrives d steps late.
struct DelayChainSpec {
  double a = 1.0;
  double q = 1.0;  ///< process-noise variance
  double r = 1.0;  ///< measurement-noise variance
  int d = 0;       ///< measurement delay in steps

  void validate() const {
    if (!std::isfinite(a)) throw ConfigError("delay chain: a must be finite");
    if (!(q > 0.0)) throw ConfigError("delay chain: Q must be > 0");
    if (!(r > 0.0)) throw ConfigError("delay chain: R must be > 0");
    if (d < 0) throw ConfigError("delay chain: d must be >= 0");
  }
  int state_dim() const { return d + 1; }
};

/// Which part of an expanded delay chain the scheduler is charged for.
enum class DelayChainCost {
  CurrentState,  ///< variance of the undelayed state only (bottom-right entry)
  FullTrace,     ///< trace of the whole augmented covariance
};

/**
 * Companion-form augmentation of a delayed scalar system: the last state is
 * the current one, earlier states are its delayed copies, C reads the oldest.
 * Q is B Q B' with B the last unit vector, so it is only PSD.
 */
inline LtiTarget expand_delay_chain(const DelayChainSpec& spec,
                                    DelayChainCost cost = DelayChainCost::CurrentState,
                                    std::string label = {}) {
  spec.validate();
  const int n = spec.state_dim();
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) a(i, i + 1) = 1.0;
  a(n - 1, n - 1) = spec.a;
  Matrix c = Matrix::Zero(1, n);
  c(0, 0) = 1.0;
  Matrix q = Matrix::Zero(n, n);
  q(n - 1, n - 1) = spec.q;
  Matrix r(1, 1);
  r(0, 0) = spec.r;
  std::optional<Matrix> w;
  if (cost == DelayChainCost::CurrentState) {
    Matrix sel = Matrix::Zero(n, n);
    sel(n - 1, n - 1) = 1.0;
    w = std::move(sel);
  }
  return LtiTarget(std::move(a), std::move(c), std::move(q), std::move(r), std::move(label),
                   std::move(w));
}

enum class Severity { Warning, Error };

struct ValidationIssue {
  Severity severity;
  std::string message;
};

struct ValidationReport {
  bool q_symmetric = false;
  bool q_positive_definite = false;
  bool q_psd = false;
  bool r_symmetric = false;
  bool r_positive_definite = false;
  bool controllable = false;  ///< (A, Q^{1/2})
  bool detectable = false;    ///< (A, C)
  std::vector<ValidationIssue> issues;

  bool valid() const {
    for (const auto& i : issues)
      if (i.severity == Severity::Error) return false;
    return true;
  }
  bool has_warnings() const {
    for (const auto& i : issues)
      if (i.severity == Severity::Warning) return true;
    return false;
  }
};

inline constexpr double kPbhRankTol = 1e-8;

namespace detail {

// PBH test: rank [lambda I - A ; C] == n for every eigenvalue with |lambda| >= 1.
inline bool pbh_detectable(const Matrix& a, const Matrix& c) {
  const auto n = a.rows();
  Eigen::EigenSolver<Matrix> es(a, false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::complex<double> lambda = es.eigenvalues()(k);
    if (std::abs(lambda) < 1.0) continue;
    Eigen::MatrixXcd m(n + c.rows(), n);
    m.topRows(n) = lambda * Eigen::MatrixXcd::Identity(n, n) - a.cast<std::complex<double>>();
    m.bottomRows(c.rows()) = c.cast<std::complex<double>>();
    if (numerical_rank(m, kPbhRankTol) < n) return false;
  }
  return true;
}

// PBH test: rank [A - lambda I, B] == n for every eigenvalue.
inline bool pbh_controllable(const Matrix& a, const Matrix& b) {
  const auto n = a.rows();
  Eigen::EigenSolver<Matrix> es(a, false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::complex<double> lambda = es.eigenvalues()(k);
    Eigen::MatrixXcd m(n, n + b.cols());
    m.leftCols(n) = a.cast<std::complex<double>>() - lambda * Eigen::MatrixXcd::Identity(n, n);
    m.rightCols(b.cols()) = b.cast<std::complex<double>>();
    if (numerical_rank(m, kPbhRankTol) < n) return false;
  }
  return true;
}

}  // namespace detail

/**
 * Checks the standing assumptions on a target. Never throws for semantic
 * problems; dimension errors are impossible here because LtiTarget rejects
 * them at construction.
 *
 * A PSD-but-singular Q is accepted with a warning when (A, Q^{1/2}) is
 * controllable (the delay-chain case). Failed detectability is a warning.
 */
inline ValidationReport validate_target(const LtiTarget& t) {
  ValidationReport rep;
  auto add = [&](Severity s, std::string m) { rep.issues.push_back({s, std::move(m)}); };

  rep.q_symmetric = detail::is_symmetric(t.Q());
  rep.r_symmetric = detail::is_symmetric(t.R());
  if (!rep.q_symmetric) add(Severity::Error, "Q is not symmetric");
  if (!rep.r_symmetric) add(Severity::Error, "R is not symmetric");

  rep.q_positive_definite = rep.q_symmetric && detail::is_positive_definite(t.Q());
  rep.q_psd = rep.q_symmetric && detail::is_psd(t.Q());
  rep.r_positive_definite = rep.r_symmetric && detail::is_positive_definite(t.R());
  if (rep.r_symmetric && !rep.r_positive_definite) add(Severity::Error, "R is not positive definite");

  rep.controllable = rep.q_psd && detail::pbh_controllable(t.A(), detail::psd_sqrt(t.Q()));
  rep.detectable = detail::pbh_detectable(t.A(), t.C());

  if (rep.q_symmetric && !rep.q_positive_definite) {
    if (rep.q_psd && rep.controllable)
      add(Severity::Warning, "Q is only positive semidefinite; (A, Q^1/2) is controllable");
    else
      add(Severity::Error, "Q is not positive definite");
  }
  if (!rep.controllable && rep.q_positive_definite)
    add(Severity::Error, "(A, Q^1/2) is not controllable");
  if (!rep.detectable) add(Severity::Warning, "(A, C) is not detectable");
  return rep;
}

/// Probability vector q over targets; entries in [0, 1] summing to 1.
class ScheduleDistribution {
 public:
  static constexpr double kSumTol = 1e-9;

  explicit ScheduleDistribution(std::vector<double> q) : q_(std::move(q)) {
    if (q_.empty()) throw ConfigError("distribution must have at least one entry");
    for (std::size_t i = 0; i < q_.size(); ++i)
      if (!(q_[i] >= 0.0 && q_[i] <= 1.0))
        throw ConfigError("distribution entry " + std::to_string(i) + " outside [0, 1]");
    const double s = std::accumulate(q_.begin(), q_.end(), 0.0);
    if (std::abs(s - 1.0) > kSumTol)
      throw ConfigError("distribution does not sum to 1 (sum = " + std::to_string(s) + ")");
  }

  std::size_t size() const noexcept { return q_.size(); }
  double operator[](std::size_t i) const { return q_[i]; }
  const std::vector<double>& values() const noexcept { return q_; }

 private:
  std::vector<double> q_;
};

}  // namespace stosched
