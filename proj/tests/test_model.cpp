#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "stosched/errors.hpp"
#include "stosched/model.hpp"

using namespace stosched;
using fixtures::mat;

namespace {

bool has_issue(const ValidationReport& rep, Severity s, const std::string& needle) {
  for (const auto& i : rep.issues)
    if (i.severity == s && i.message.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(LtiTarget, RejectsMismatchedDimensions) {
  EXPECT_THROW(LtiTarget(mat({{1, 0}}), mat({{1}}), mat({{1}}), mat({{1}})), ConfigError);
  EXPECT_THROW(LtiTarget(mat({{1}}), mat({{1, 0}}), mat({{1}}), mat({{1}})), ConfigError);
  EXPECT_THROW(LtiTarget(mat({{1}}), mat({{1}}), Matrix::Identity(2, 2), mat({{1}})), ConfigError);
  EXPECT_THROW(LtiTarget(mat({{1}}), mat({{1}}), mat({{1}}), Matrix::Identity(2, 2)), ConfigError);
  EXPECT_THROW(LtiTarget(mat({{1}}), mat({{1}}), mat({{1}}), mat({{1}}), "", Matrix::Identity(2, 2)),
               ConfigError);
}

TEST(LtiTarget, DefaultCostIsTrace) {
  const auto t = fixtures::example_a()[0];
  EXPECT_TRUE(t.has_identity_cost());
  EXPECT_DOUBLE_EQ(target_cost(t, mat({{2, 1}, {1, 3}})), 5.0);
}

TEST(Validation, ExampleSystemsAreClean) {
  for (const auto& t : fixtures::example_a()) {
    const auto rep = validate_target(t);
    EXPECT_TRUE(rep.valid());
    EXPECT_FALSE(rep.has_warnings());
    EXPECT_TRUE(rep.controllable);
    EXPECT_TRUE(rep.detectable);
  }
}

TEST(Validation, AsymmetricQIsAnError) {
  const LtiTarget t(mat({{1, 0}, {0, 1}}), mat({{1, 0}}), mat({{1, 0.5}, {0, 1}}), mat({{1}}));
  const auto rep = validate_target(t);
  EXPECT_FALSE(rep.valid());
  EXPECT_TRUE(has_issue(rep, Severity::Error, "Q is not symmetric"));
}

TEST(Validation, IndefiniteROrQIsAnError) {
  EXPECT_FALSE(validate_target(fixtures::scalar(1.0, 1.0, 0.0)).valid());
  EXPECT_FALSE(validate_target(fixtures::scalar(1.0, -1.0, 1.0)).valid());
}

TEST(Validation, UndetectablePairIsOnlyAWarning) {
  // An unstable mode with C = 0 cannot be seen.
  const auto rep = validate_target(fixtures::scalar(2.0, 1.0, 1.0, 0.0));
  EXPECT_TRUE(rep.valid());
  EXPECT_FALSE(rep.detectable);
  EXPECT_TRUE(has_issue(rep, Severity::Warning, "detectable"));
}

TEST(Validation, StableUnobservedModeIsDetectable) {
  const auto rep = validate_target(fixtures::scalar(0.5, 1.0, 1.0, 0.0));
  EXPECT_TRUE(rep.detectable);
}

TEST(Validation, SingularQWithoutControllabilityIsAnError) {
  const LtiTarget t(Matrix::Identity(2, 2), mat({{1, 0}}), mat({{1, 0}, {0, 0}}), mat({{1}}));
  EXPECT_FALSE(validate_target(t).valid());
}

TEST(DelayChain, ExpansionStructure) {
  const auto t = expand_delay_chain({0.9, 2.0, 3.0, 2});
  EXPECT_TRUE(t.A().isApprox(mat({{0, 1, 0}, {0, 0, 1}, {0, 0, 0.9}})));
  EXPECT_TRUE(t.C().isApprox(mat({{1, 0, 0}})));
  EXPECT_TRUE(t.Q().isApprox(mat({{0, 0, 0}, {0, 0, 0}, {0, 0, 2}})));
  EXPECT_DOUBLE_EQ(t.R()(0, 0), 3.0);
  // Only the current (undelayed) state is charged by default.
  EXPECT_DOUBLE_EQ(target_cost(t, mat({{1, 0, 0}, {0, 2, 0}, {0, 0, 4}})), 4.0);
  const auto full = expand_delay_chain({0.9, 2.0, 3.0, 2}, DelayChainCost::FullTrace);
  EXPECT_DOUBLE_EQ(target_cost(full, mat({{1, 0, 0}, {0, 2, 0}, {0, 0, 4}})), 7.0);
}

TEST(DelayChain, ZeroDelayIsTheScalarSystem) {
  const auto t = expand_delay_chain({1.3, 2.0, 0.5, 0});
  EXPECT_EQ(t.state_dim(), 1);
  EXPECT_DOUBLE_EQ(t.A()(0, 0), 1.3);
  EXPECT_DOUBLE_EQ(t.Q()(0, 0), 2.0);
}

TEST(DelayChain, ExpandedChainValidatesWithWarningOnly) {
  const auto rep = validate_target(expand_delay_chain({1, 5, 1, 2}));
  EXPECT_TRUE(rep.valid());
  EXPECT_TRUE(rep.controllable);
  EXPECT_TRUE(rep.detectable);
  EXPECT_TRUE(has_issue(rep, Severity::Warning, "semidefinite"));
}

TEST(DelayChain, BadParametersThrow) {
  EXPECT_THROW(expand_delay_chain({1, 0, 1, 1}), ConfigError);
  EXPECT_THROW(expand_delay_chain({1, 1, -1, 1}), ConfigError);
  EXPECT_THROW(expand_delay_chain({1, 1, 1, -1}), ConfigError);
}

TEST(ScheduleDistribution, Validation) {
  EXPECT_NO_THROW(ScheduleDistribution({0.25, 0.75}));
  EXPECT_THROW(ScheduleDistribution({0.3, 0.6}), ConfigError);
  EXPECT_THROW(ScheduleDistribution({-0.1, 1.1}), ConfigError);
  EXPECT_THROW(ScheduleDistribution({}), ConfigError);
}
