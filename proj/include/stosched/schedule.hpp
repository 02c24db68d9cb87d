#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stosched/detail/random.hpp"
#include "stosched/errors.hpp"
#include "stosched/model.hpp"

namespace stosched {

/// One observed target index per time step.
struct ScheduleSequence {
  std::vector<std::size_t> steps;
  std::size_t n_targets = 0;

  std::size_t size() const noexcept { return steps.size(); }
  std::size_t operator[](std::size_t k) const { return steps[k]; }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> c(n_targets, 0);
    for (auto s : steps) ++c[s];
    return c;
  }

  void validate() const {
    for (auto s : steps)
      if (s >= n_targets) throw ConfigError("schedule entry " + std::to_string(s) + " out of range");
  }
};

// Text format: "# L=<length> N=<targets>" then one index per line.
inline void write_schedule(std::ostream& os, const ScheduleSequence& seq) {
  os << "# L=" << seq.size() << " N=" << seq.n_targets << '\n';
  for (auto s : seq.steps) os << s << '\n';
}

inline std::string to_text(const ScheduleSequence& seq) {
  std::ostringstream os;
  write_schedule(os, seq);
  return os.str();
}

inline ScheduleSequence read_schedule(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ConfigError("schedule file is empty");
  std::size_t len = 0, n = 0;
  if (std::sscanf(header.c_str(), "# L=%zu N=%zu", &len, &n) != 2)
    throw ConfigError("schedule header must be '# L=<length> N=<targets>'");
  ScheduleSequence seq;
  seq.n_targets = n;
  seq.steps.reserve(len);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(line, &pos);
    } catch (const std::exception&) {
      throw ConfigError("schedule line is not an index: '" + line + "'");
    }
    if (pos != line.size()) throw ConfigError("schedule line is not an index: '" + line + "'");
    seq.steps.push_back(static_cast<std::size_t>(v));
  }
  if (seq.steps.size() != len) throw ConfigError("schedule length does not match header");
  seq.validate();
  return seq;
}

/// i.i.d. categorical draws from q; identical sequences for identical seeds.
inline ScheduleSequence sample_stochastic_schedule(const ScheduleDistribution& q, std::size_t length,
                                                   std::uint64_t seed) {
  if (length == 0) throw ConfigError("schedule length must be >= 1");
  std::vector<double> cdf(q.size());
  std::partial_sum(q.values().begin(), q.values().end(), cdf.begin());
  std::mt19937_64 rng(seed);
  ScheduleSequence seq;
  seq.n_targets = q.size();
  seq.steps.resize(length);
  for (auto& s : seq.steps) {
    const double u = detail::uniform01(rng) * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    s = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), q.size() - 1);
    // Skip zero-probability targets that upper_bound can land on via rounding.
    while (q[s] == 0.0 && s > 0) --s;
  }
  return seq;
}

/**
 * Occurrence counts floor(q_i L), with the L - sum floor(q_i L) leftover slots
 * given to the largest fractional parts (ties to the lower index).
 * Throws when some floor(q_i L) is zero.
 */
inline std::vector<std::size_t> apportion_counts(const ScheduleDistribution& q, std::size_t length) {
  const std::size_t n = q.size();
  std::vector<std::size_t> counts(n);
  std::vector<double> frac(n);
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = q[i] * static_cast<double>(length);
    const double fl = std::floor(exact + 1e-9);
    counts[i] = static_cast<std::size_t>(fl);
    frac[i] = exact - fl;
    used += counts[i];
  }
  for (std::size_t i = 0; i < n; ++i)
    if (counts[i] == 0)
      throw ConfigError("floor(q_" + std::to_string(i) + " * L) = 0 for L = " +
                        std::to_string(length) + "; choose a larger L");
  if (used > length) throw ConfigError("distribution counts exceed L");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; used < length; ++k, ++used) ++counts[order[k % n]];
  return counts;
}

struct MinConsecutiveStats {
  std::size_t operations = 0;  ///< element visits across all passes
};

namespace detail {

// Inserts `remaining` copies of `item` after the last eligible positions of seq.
template <typename Eligible>
std::size_t insert_from_tail(std::vector<std::size_t>& seq, std::size_t item, std::size_t remaining,
                             Eligible eligible, MinConsecutiveStats& stats) {
  std::vector<bool> mark(seq.size(), false);
  std::size_t chosen = 0;
  for (std::size_t p = seq.size(); p-- > 0 && chosen < remaining;) {
    ++stats.operations;
    if (eligible(seq, p)) {
      mark[p] = true;
      ++chosen;
    }
  }
  if (chosen == 0) return 0;
  std::vector<std::size_t> out;
  out.reserve(seq.size() + chosen);
  for (std::size_t p = 0; p < seq.size(); ++p) {
    ++stats.operations;
    out.push_back(seq[p]);
    if (mark[p]) out.push_back(item);
  }
  seq = std::move(out);
  return chosen;
}

}  // namespace detail

/**
 * Periodic low-consecutiveness sequence with exact occurrence counts.
 *
 * The most frequent target a1 is laid down first; each other target a_i is
 * then placed after every m_i = ceil(n1 / (n_i + 1))-th occurrence of a1 by a
 * backoff counter. Copies left over when the a1's run out go into the last
 * a1-a1 gaps (and the tail), then anywhere not adjacent to the same target.
 */
inline ScheduleSequence build_min_consecutive_from_counts(const std::vector<std::size_t>& counts,
                                                          MinConsecutiveStats* stats = nullptr) {
  const std::size_t n = counts.size();
  if (n == 0) throw ConfigError("no targets");
  for (std::size_t i = 0; i < n; ++i)
    if (counts[i] == 0)
      throw ConfigError("target " + std::to_string(i) + " has zero occurrences; choose a larger L");
  MinConsecutiveStats local;
  MinConsecutiveStats& st = stats ? *stats : local;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  const std::size_t a1 = order[0];
  const std::size_t n1 = counts[a1];

  std::vector<std::size_t> seq(n1, a1);
  st.operations += n1;
  for (std::size_t r = 1; r < n; ++r) {
    const std::size_t ai = order[r];
    const std::size_t ni = counts[ai];
    const std::size_t m = (n1 + ni) / (ni + 1);  // ceil(n1 / (ni + 1))
    std::vector<std::size_t> next;
    next.reserve(seq.size() + ni);
    std::size_t counter = m, remaining = ni;
    for (auto s : seq) {
      ++st.operations;
      next.push_back(s);
      if (s == a1 && counter > 0 && --counter == 0 && remaining > 0) {
        next.push_back(ai);
        --remaining;
        counter = m;
      }
    }
    seq = std::move(next);
    if (remaining == 0) continue;

    remaining -= detail::insert_from_tail(
        seq, ai, remaining,
        [a1](const std::vector<std::size_t>& s, std::size_t p) {
          return s[p] == a1 && (p + 1 == s.size() || s[p + 1] == a1);
        },
        st);
    while (remaining > 0) {
      const std::size_t placed = detail::insert_from_tail(
          seq, ai, remaining,
          [ai](const std::vector<std::size_t>& s, std::size_t p) {
            return s[p] != ai && (p + 1 == s.size() || s[p + 1] != ai);
          },
          st);
      if (placed == 0) break;
      remaining -= placed;
    }
    seq.insert(seq.end(), remaining, ai);
    st.operations += remaining;
  }
  return ScheduleSequence{std::move(seq), n};
}

/// Minimal-consecutiveness schedule of length L for distribution q.
inline ScheduleSequence build_min_consecutive_schedule(const ScheduleDistribution& q,
                                                       std::size_t length,
                                                       MinConsecutiveStats* stats = nullptr) {
  if (length == 0) throw ConfigError("schedule length must be >= 1");
  return build_min_consecutive_from_counts(apportion_counts(q, length), stats);
}

/// Length of the longest run of one target.
inline std::size_t max_run_length(const ScheduleSequence& seq) {
  if (seq.steps.empty()) throw ConfigError("max_run_length of an empty sequence");
  std::size_t best = 1, run = 1;
  for (std::size_t k = 1; k < seq.size(); ++k) {
    run = seq[k] == seq[k - 1] ? run + 1 : 1;
    best = std::max(best, run);
  }
  return best;
}

struct BackoffConfig {
  double alpha = 1e-3;           ///< backoff time unit, in sampling periods
  double epsilon_jitter = 1e-4;  ///< upper bound of the collision re-draw offset
  std::size_t duration = 10000;  ///< sampling periods to simulate

  void validate(const ScheduleDistribution& q) const {
    if (!(alpha > 0.0 && alpha <= 0.01)) throw ConfigError("backoff alpha must lie in (0, 0.01]");
    if (duration == 0) throw ConfigError("backoff duration must be >= 1");
    const double qmin = *std::min_element(q.values().begin(), q.values().end());
    if (!(qmin > 0.0)) throw ConfigError("CSMA scheduling needs every q_i > 0");
    if (!(epsilon_jitter > 0.0 && epsilon_jitter < qmin))
      throw ConfigError("epsilon_jitter must lie in (0, min q_i)");
  }
};

struct CsmaResult {
  ScheduleSequence sequence;
  std::size_t collisions = 0;
};

/**
 * Event-driven backoff contention, one winner per sampling period.
 *
 * Every estimator counts down T_i = alpha / q_i while the channel is idle and
 * freezes while it is busy. The first timer to expire takes the slot and is
 * reset to alpha / q_i. Timers expiring within alpha * 1e-9 of each other
 * collide; colliders re-draw T_i = alpha / (q_i - eps_i), eps_i ~ U(0, jitter].
 */
inline CsmaResult simulate_csma_schedule(const ScheduleDistribution& q, const BackoffConfig& cfg,
                                         std::uint64_t seed) {
  cfg.validate(q);
  const std::size_t n = q.size();
  const double resolution = cfg.alpha * 1e-9;
  std::mt19937_64 rng(seed);
  std::vector<double> remaining(n);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = cfg.alpha / q[i];

  CsmaResult out;
  out.sequence.n_targets = n;
  out.sequence.steps.reserve(cfg.duration);
  std::vector<std::size_t> expiring;
  while (out.sequence.size() < cfg.duration) {
    const double t_min = *std::min_element(remaining.begin(), remaining.end());
    expiring.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (remaining[i] - t_min <= resolution) expiring.push_back(i);
      remaining[i] -= t_min;
    }
    if (expiring.size() == 1) {
      const std::size_t w = expiring.front();
      out.sequence.steps.push_back(w);
      remaining[w] = cfg.alpha / q[w];
      continue;
    }
    ++out.collisions;
    for (auto i : expiring) {
      double eps = detail::uniform01(rng) * cfg.epsilon_jitter;
      if (eps <= 0.0) eps = cfg.epsilon_jitter;
      remaining[i] = cfg.alpha / (q[i] - eps);
    }
  }
  return out;
}

}  // namespace stosched
