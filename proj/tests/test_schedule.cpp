#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "stosched/schedule.hpp"

using namespace stosched;

namespace {

std::vector<double> frequencies(const ScheduleSequence& s) {
  std::vector<double> f;
  for (auto c : s.counts()) f.push_back(static_cast<double>(c) / static_cast<double>(s.size()));
  return f;
}

// Smallest achievable longest run over every arrangement of n0 zeros and n1 ones.
std::size_t brute_force_min_run(std::size_t n0, std::size_t n1) {
  std::vector<std::size_t> v(n0, 0);
  v.insert(v.end(), n1, 1);
  std::size_t best = v.size();
  do {
    best = std::min(best, max_run_length(ScheduleSequence{v, 2}));
  } while (std::next_permutation(v.begin(), v.end()));
  return best;
}

}  // namespace

TEST(Apportion, FloorsThenLargestRemainders) {
  EXPECT_EQ(apportion_counts(ScheduleDistribution({0.674, 0.326}), 500),
            (std::vector<std::size_t>{337, 163}));
  // floors 3, 3, 3 and fractions 1/3 each: the single leftover goes to the first.
  EXPECT_EQ(apportion_counts(ScheduleDistribution({1.0 / 3, 1.0 / 3, 1.0 / 3}), 10),
            (std::vector<std::size_t>{4, 3, 3}));
  // floors 13, 5, 1 with fractions .0, .4, .6
  EXPECT_EQ(apportion_counts(ScheduleDistribution({0.65, 0.27, 0.08}), 20),
            (std::vector<std::size_t>{13, 5, 2}));
}

TEST(Apportion, ZeroFloorNamesTheTarget) {
  try {
    apportion_counts(ScheduleDistribution({0.995, 0.005}), 100);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("q_1"), std::string::npos);
  }
}

TEST(MinConsecutive, ExactCountsAndShortRunsOnExampleA) {
  const auto s = build_min_consecutive_schedule(ScheduleDistribution({0.674, 0.326}), 500);
  EXPECT_EQ(s.size(), 500u);
  EXPECT_EQ(s.counts(), (std::vector<std::size_t>{337, 163}));
  // 337 zeros need 164 separators for runs of 2; with 163 the optimum is 3.
  EXPECT_EQ(max_run_length(s), 3u);
}

TEST(MinConsecutive, MatchesExhaustiveSearchForTwoTargets) {
  for (std::size_t len = 2; len <= 12; ++len)
    for (std::size_t n0 = 1; n0 < len; ++n0) {
      const auto s = build_min_consecutive_from_counts({n0, len - n0});
      EXPECT_EQ(s.counts(), (std::vector<std::size_t>{n0, len - n0}));
      EXPECT_EQ(max_run_length(s), brute_force_min_run(n0, len - n0)) << n0 << "," << len - n0;
    }
}

// With more than two targets the construction places one target at a time,
// so its runs are bounded by the pairwise spacing ceil(n1 / (n2 + 1)) of the
// most frequent target against the second, not by the joint optimum.
TEST(MinConsecutive, ThreeTargetsKeepCountsAndPairwiseSpacing) {
  const auto s = build_min_consecutive_from_counts({5, 3, 2});
  EXPECT_EQ(s.counts(), (std::vector<std::size_t>{5, 3, 2}));
  EXPECT_EQ(to_text(s), "# L=10 N=3\n0\n0\n2\n1\n0\n0\n2\n1\n0\n1\n");
  EXPECT_LE(max_run_length(s), 2u);
  // 1,1,0,1,1,0,1,1,2,1 would reach 2; the greedy placement gives 3.
  const auto t = build_min_consecutive_from_counts({2, 7, 1});
  EXPECT_EQ(t.counts(), (std::vector<std::size_t>{2, 7, 1}));
  EXPECT_EQ(max_run_length(t), 3u);
  EXPECT_EQ(max_run_length(build_min_consecutive_from_counts({4, 4, 4})), 1u);
}

TEST(MinConsecutive, SingleTargetIsOneRun) {
  const auto s = build_min_consecutive_from_counts({4});
  EXPECT_EQ(max_run_length(s), 4u);
}

TEST(MinConsecutive, OperationCountGrowsLinearly) {
  const ScheduleDistribution q({0.5, 0.3, 0.2});
  MinConsecutiveStats small, large;
  build_min_consecutive_schedule(q, 1000, &small);
  build_min_consecutive_schedule(q, 100000, &large);
  const double ratio = static_cast<double>(large.operations) / static_cast<double>(small.operations);
  EXPECT_NEAR(ratio, 100.0, 10.0);
  EXPECT_LE(large.operations, 100000u * 3u * 3u);
}

TEST(Stochastic, FrequenciesFollowDistribution) {
  const ScheduleDistribution q({0.0649, 0.1612, 0.7739});
  const auto s = sample_stochastic_schedule(q, 20000, 99);
  const auto f = frequencies(s);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(f[i], q[i], 0.02);
}

TEST(Stochastic, SeedDeterminesSequence) {
  const ScheduleDistribution q({0.3, 0.7});
  EXPECT_EQ(sample_stochastic_schedule(q, 500, 5).steps, sample_stochastic_schedule(q, 500, 5).steps);
  EXPECT_NE(sample_stochastic_schedule(q, 500, 5).steps, sample_stochastic_schedule(q, 500, 6).steps);
}

TEST(Stochastic, ZeroProbabilityTargetNeverChosen) {
  const auto s = sample_stochastic_schedule(ScheduleDistribution({0.0, 1.0, 0.0}), 1000, 1);
  EXPECT_EQ(s.counts(), (std::vector<std::size_t>{0, 1000, 0}));
}

TEST(Csma, FrequenciesPreserved) {
  const ScheduleDistribution q({0.0649, 0.1612, 0.7739});
  const auto r = simulate_csma_schedule(q, {}, 3);
  const auto f = frequencies(r.sequence);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(f[i], q[i], 0.02);
}

TEST(Csma, EqualTimersCollideAndStillShareFairly) {
  const ScheduleDistribution q({0.5, 0.5});
  BackoffConfig cfg;
  cfg.duration = 4000;
  const auto r = simulate_csma_schedule(q, cfg, 11);
  EXPECT_GT(r.collisions, 0u);
  EXPECT_NEAR(frequencies(r.sequence)[0], 0.5, 0.02);
}

TEST(Csma, DeterministicPerSeed) {
  const ScheduleDistribution q({0.5, 0.5});
  EXPECT_EQ(simulate_csma_schedule(q, {}, 4).sequence.steps,
            simulate_csma_schedule(q, {}, 4).sequence.steps);
}

TEST(Csma, ValidatesParameters) {
  const ScheduleDistribution q({0.5, 0.5});
  BackoffConfig cfg;
  cfg.alpha = 0.1;
  EXPECT_THROW(simulate_csma_schedule(q, cfg, 1), ConfigError);
  cfg = {};
  cfg.epsilon_jitter = 0.6;
  EXPECT_THROW(simulate_csma_schedule(q, cfg, 1), ConfigError);
  EXPECT_THROW(simulate_csma_schedule(ScheduleDistribution({0.0, 1.0}), {}, 1), ConfigError);
}

TEST(Serialization, RoundTrip) {
  const ScheduleSequence s{{0, 1, 1, 2, 0}, 3};
  EXPECT_EQ(to_text(s), "# L=5 N=3\n0\n1\n1\n2\n0\n");
  std::istringstream in(to_text(s));
  const auto back = read_schedule(in);
  EXPECT_EQ(back.steps, s.steps);
  EXPECT_EQ(back.n_targets, 3u);
}

TEST(Serialization, RejectsMalformedInput) {
  std::istringstream bad_header("L=2\n0\n1\n");
  EXPECT_THROW(read_schedule(bad_header), ConfigError);
  std::istringstream short_body("# L=3 N=2\n0\n1\n");
  EXPECT_THROW(read_schedule(short_body), ConfigError);
  std::istringstream out_of_range("# L=2 N=2\n0\n2\n");
  EXPECT_THROW(read_schedule(out_of_range), ConfigError);
  std::istringstream junk("# L=2 N=2\n0\nx\n");
  EXPECT_THROW(read_schedule(junk), ConfigError);
}
