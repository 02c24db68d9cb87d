#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "stosched/detail/linalg.hpp"
#include "stosched/mare.hpp"

using namespace stosched;
using fixtures::mat;

TEST(RiccatiMap, ScalarHandValues) {
  const auto t = fixtures::scalar(1.0, 1.0, 1.0);
  // 1 + 1 - 1 * 1 / (1 + 1)
  EXPECT_DOUBLE_EQ(g_q(t, 1.0, mat({{1.0}}))(0, 0), 1.5);
  // Open loop: a^2 x + Q.
  EXPECT_DOUBLE_EQ(g_q(fixtures::scalar(2.0, 1.0, 1.0), 0.0, mat({{3.0}}))(0, 0), 13.0);
  // 4 * 3 + 1 - 0.5 * 4 * 9 / 4
  EXPECT_DOUBLE_EQ(g_q(fixtures::scalar(2.0, 1.0, 1.0), 0.5, mat({{3.0}}))(0, 0), 8.5);
}

TEST(RiccatiMap, MatchesExplicitInverseForm) {
  const auto targets = fixtures::example_a();
  const Matrix x = mat({{4, 1}, {1, 3}});
  for (const auto& t : targets)
    for (double q : {0.0, 0.326, 0.674, 1.0}) {
      const Matrix got = g_q(t, q, x);
      const Matrix want = fixtures::riccati_map_explicit(t, q, x);
      EXPECT_LT((got - want).norm(), 1e-12 * want.norm()) << "q=" << q;
    }
}

TEST(RiccatiMap, RejectsBadProbability) {
  const auto t = fixtures::scalar(1.0, 1.0, 1.0);
  EXPECT_THROW(g_q(t, -0.1, mat({{1}})), ConfigError);
  EXPECT_THROW(g_q(t, 1.5, mat({{1}})), ConfigError);
}

TEST(SolveMare, ScalarFixedPointsMatchQuadraticRoot) {
  struct Case { double a, qn, r, q; };
  for (const auto& c : {Case{1.2, 1.0, 1.0, 0.6}, Case{0.5, 2.0, 0.3, 0.1}, Case{1.0, 1.0, 1.0, 0.5},
                        Case{1.9, 0.7, 2.0, 0.95}, Case{-1.4, 1.0, 1.0, 0.8}}) {
    const auto r = solve_mare(fixtures::scalar(c.a, c.qn, c.r), c.q);
    ASSERT_TRUE(r.converged()) << c.a << " " << c.q;
    const double want = fixtures::scalar_fixed_point(c.a, c.qn, c.r, c.q);
    EXPECT_NEAR(r.X(0, 0), want, 1e-7 * want);
  }
}

TEST(SolveMare, StableOpenLoopIsLyapunovSolution) {
  const auto r = solve_mare(fixtures::scalar(0.5, 1.0, 1.0), 0.0);
  ASSERT_TRUE(r.converged());
  EXPECT_NEAR(r.X(0, 0), 4.0 / 3.0, 1e-8);
}

TEST(SolveMare, UnstableBelowCriticalDiverges) {
  const auto r = solve_mare(fixtures::scalar(2.0, 1.0, 1.0), 0.5);
  EXPECT_EQ(r.status, MareStatus::Diverged);
  EXPECT_FALSE(r.converged());
}

TEST(SolveMare, FixedPointIsAFixedPoint) {
  for (const auto& t : fixtures::example_a()) {
    const auto r = solve_mare(t, 0.5);
    ASSERT_TRUE(r.converged());
    EXPECT_LT((g_q(t, 0.5, r.X) - r.X).norm(), 1e-7);
    EXPECT_TRUE(detail::is_psd(r.X));
  }
}

TEST(SolveMare, IndependentOfInitialCondition) {
  const auto t = fixtures::example_a()[1];
  const auto from_q = solve_mare(t, 0.4);
  const auto from_zero = solve_mare(t, 0.4, Matrix::Zero(2, 2));
  const auto from_big = solve_mare(t, 0.4, 100.0 * Matrix::Identity(2, 2));
  ASSERT_TRUE(from_q.converged() && from_zero.converged() && from_big.converged());
  EXPECT_LT((from_zero.X - from_q.X).norm(), 1e-6);
  EXPECT_LT((from_big.X - from_q.X).norm(), 1e-6);
}

TEST(SolveMare, MonotoneInProbability) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const auto targets = fixtures::example_a();
  for (int k = 0; k < 30; ++k) {
    double q1 = u(rng), q2 = u(rng);
    if (q1 > q2) std::swap(q1, q2);
    const auto& t = targets[static_cast<std::size_t>(k) % 2];
    const auto x1 = solve_mare(t, q1), x2 = solve_mare(t, q2);
    ASSERT_TRUE(x1.converged() && x2.converged());
    EXPECT_GE(detail::min_eigenvalue(x1.X - x2.X), -1e-8) << q1 << " " << q2;
  }
}

TEST(SolveMare, BudgetCheckAgreesWithFullSolve) {
  const auto t = fixtures::example_a()[0];
  const double cost = solve_mare(t, 0.6).X.trace();
  EXPECT_TRUE(fixed_point_within_budget(t, 0.6, cost + 1e-3));
  EXPECT_FALSE(fixed_point_within_budget(t, 0.6, cost - 1e-3));
  EXPECT_FALSE(fixed_point_within_budget(fixtures::scalar(2.0, 1, 1), 0.5, 1e6));
}

TEST(ClosedForm, RandomWalkUsesSimplifiedRoot) {
  // a = 1, d = 0: x = (Q + sqrt(Q^2 + 4 q Q R)) / (2 q)
  const auto x = closed_form_delay_chain({1.0, 2.0, 3.0, 0}, 0.5);
  ASSERT_TRUE(x);
  EXPECT_NEAR((*x)(0, 0), (2.0 + std::sqrt(4.0 + 12.0)) / 1.0, 1e-12);
  EXPECT_NEAR((*x)(0, 0), fixtures::scalar_fixed_point(1.0, 2.0, 3.0, 0.5), 1e-12);
}

TEST(ClosedForm, AgreesWithIterationOnDelayChains) {
  for (const auto& spec : {DelayChainSpec{1, 1, 1, 1}, DelayChainSpec{1, 5, 1, 2},
                           DelayChainSpec{0.8, 2, 0.5, 3}, DelayChainSpec{1.3, 1, 2, 2}}) {
    const double q = 0.7;
    const auto cf = closed_form_delay_chain(spec, q);
    const auto it = solve_mare(expand_delay_chain(spec), q);
    ASSERT_TRUE(cf && it.converged());
    EXPECT_LT(((*cf) - it.X).cwiseAbs().maxCoeff(), 1e-6 * it.X.cwiseAbs().maxCoeff());
  }
}

TEST(ClosedForm, CoversChainsTooIllConditionedToIterate) {
  // Fixed point spans 3.5e5 .. 8.9e18; the posterior of the current state
  // cancels about nine digits, so iterates jitter around 1e-3 relative.
  const DelayChainSpec spec{171.13894464398484, 8.9387082312975128, 4.2327085883029225, 3};
  const double q = 0.99997784465419726;
  const auto cf = closed_form_delay_chain(spec, q);
  ASSERT_TRUE(cf);
  EXPECT_NEAR((*cf)(3, 3), 8.8714e18, 1e15);
  MareOptions opt;
  opt.max_iter = 2000;
  const auto it = solve_mare(expand_delay_chain(spec), q, opt);
  // The iteration must not claim divergence, and stays PSD and close.
  EXPECT_NE(it.status, MareStatus::Diverged);
  EXPECT_GE(detail::min_eigenvalue(it.X / it.X.norm()), -1e-9);
  EXPECT_NEAR(it.X.trace() / cf->trace(), 1.0, 1e-2);
}

TEST(ClosedForm, ReportsDivergence) {
  EXPECT_FALSE(closed_form_delay_chain({2.0, 1, 1, 1}, 0.7));
  EXPECT_FALSE(closed_form_delay_chain({1.0, 1, 1, 2}, 0.0));
  EXPECT_TRUE(closed_form_delay_chain({2.0, 1, 1, 1}, 0.8));
}

TEST(CriticalProbability, ScalarUnstable) {
  // 1 - 1/a^2
  const auto c = critical_probability(fixtures::scalar(2.0, 1.0, 1.0), 1e-6);
  EXPECT_TRUE(c.feasible);
  EXPECT_NEAR(c.value, 0.75, 1e-3);
  EXPECT_NEAR(critical_probability(fixtures::scalar(1.25, 1.0, 1.0), 1e-6).value, 1.0 - 1.0 / 1.5625,
              1e-3);
}

TEST(CriticalProbability, StableOrMarginalIsZero) {
  EXPECT_DOUBLE_EQ(critical_probability(fixtures::scalar(0.9, 1.0, 1.0)).value, 0.0);
  EXPECT_DOUBLE_EQ(critical_probability(fixtures::scalar(1.0, 1.0, 1.0)).value, 0.0);
  for (const auto& t : fixtures::example_a()) EXPECT_DOUBLE_EQ(critical_probability(t).value, 0.0);
}

TEST(CriticalProbability, UndetectableNeverConverges) {
  const auto c = critical_probability(fixtures::scalar(2.0, 1.0, 1.0, 0.0));
  EXPECT_FALSE(c.feasible);
}
