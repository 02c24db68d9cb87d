#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "stosched/model.hpp"

namespace fixtures {

using stosched::LtiTarget;
using stosched::Matrix;

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

inline LtiTarget scalar(double a, double q, double r, double c = 1.0) {
  return LtiTarget(mat({{a}}), mat({{c}}), mat({{q}}), mat({{r}}));
}

// The two second-order systems of the tracking example.
inline std::vector<LtiTarget> example_a() {
  return {LtiTarget(mat({{0, 1}, {-0.49, 1.4}}), mat({{1, 0}}), 5 * Matrix::Identity(2, 2),
                    mat({{0.5}}), "s1"),
          LtiTarget(mat({{0, 1}, {-0.72, 1.7}}), mat({{1, 0}}), Matrix::Identity(2, 2), mat({{1}}),
                    "s2")};
}

// Three random walks with delayed measurements.
inline std::vector<LtiTarget> example_b() {
  return {stosched::expand_delay_chain({1, 1, 1, 1}), stosched::expand_delay_chain({1, 2, 1, 2}),
          stosched::expand_delay_chain({1, 5, 1, 2})};
}

// Positive root of x = a^2 x + Q - q a^2 x^2 / (x + R), written as
// (1 - a^2 (1 - q)) x^2 + (R (1 - a^2) - Q) x - Q R = 0 (scalar C = 1).
// NaN when no finite fixed point exists.
inline double scalar_fixed_point(double a, double q_noise, double r, double q) {
  const double a2 = a * a;
  const double c2 = 1.0 - a2 * (1.0 - q);
  if (c2 <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double c1 = r * (1.0 - a2) - q_noise;
  const double c0 = -q_noise * r;
  return (-c1 + std::sqrt(c1 * c1 - 4.0 * c2 * c0)) / (2.0 * c2);
}

// Riccati map written with an explicit inverse, as a cross-check on the solver's LDLT form.
inline Matrix riccati_map_explicit(const LtiTarget& t, double q, const Matrix& x) {
  const Matrix& a = t.A();
  const Matrix& c = t.C();
  const Matrix s = c * x * c.transpose() + t.R();
  return a * x * a.transpose() + t.Q() -
         q * a * x * c.transpose() * s.inverse() * c * x * a.transpose();
}

}  // namespace fixtures
