#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "stosched/config.hpp"
#include "stosched/distributed.hpp"
#include "stosched/optimizer.hpp"
#include "stosched/schedule.hpp"
#include "stosched/simulate.hpp"

namespace stosched {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitInfeasible = 3, kExitNumeric = 4 };

enum class ScheduleKind { Random, MinConsecutive, Csma };

inline ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "random") return ScheduleKind::Random;
  if (s == "minconsec") return ScheduleKind::MinConsecutive;
  if (s == "csma") return ScheduleKind::Csma;
  throw ConfigError("--kind must be random, minconsec or csma");
}

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Random: return "random";
    case ScheduleKind::MinConsecutive: return "minconsec";
    case ScheduleKind::Csma: return "csma";
  }
  return "?";
}

struct CommandOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  ScheduleKind kind = ScheduleKind::MinConsecutive;
  std::optional<std::size_t> window;
  bool distributed = false;
  std::optional<std::filesystem::path> solution;  ///< reuse q* from a solution.csv
};

namespace detail {

inline std::string num(double v, int precision = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + (dir / name).string());
  return os;
}

inline void write_series_csv(std::ostream& os, const Matrix& series) {
  os << "step";
  for (Eigen::Index i = 0; i < series.cols(); ++i) os << ",target_" << i << "_trace";
  os << '\n';
  for (Eigen::Index k = 0; k < series.rows(); ++k) {
    os << k + 1;
    for (Eigen::Index i = 0; i < series.cols(); ++i) os << ',' << num(series(k, i), 12);
    os << '\n';
  }
}

}  // namespace detail

inline void write_solution_csv(std::ostream& os, const std::vector<LtiTarget>& targets,
                               const SolveReport& rep) {
  os << "target,label,q_star,cost,q_critical,gamma_star\n";
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& p = rep.per_target[i];
    os << i << ',' << detail::csv_field(targets[i].label()) << ',' << detail::num(p.q) << ','
       << detail::num(p.cost) << ',' << detail::num(p.q_critical) << ','
       << detail::num(rep.gamma_star) << '\n';
  }
}

struct SolutionRow {
  std::size_t target = 0;
  std::string label;
  double q = 0.0, cost = 0.0, q_critical = 0.0, gamma_star = 0.0;
};

inline std::vector<SolutionRow> read_solution_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "target,label,q_star,cost,q_critical,gamma_star")
    throw ConfigError("solution file has an unexpected header");
  std::vector<SolutionRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
      const char c = line[k];
      if (quoted) {
        if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') cur += '"', ++k;
        else if (c == '"') quoted = false;
        else cur += c;
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    if (f.size() != 6) throw ConfigError("solution row must have 6 fields");
    try {
      rows.push_back({std::stoul(f[0]), f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                      std::stod(f[5])});
    } catch (const std::exception&) {
      throw ConfigError("solution row has a malformed number: " + line);
    }
  }
  return rows;
}

/// q* either from a prior solution file or by solving.
inline ScheduleDistribution obtain_distribution(const ScenarioConfig& cfg, const CommandOptions& opt) {
  if (opt.solution) {
    std::ifstream in(*opt.solution);
    if (!in) throw ConfigError("cannot open solution file " + opt.solution->string());
    const auto rows = read_solution_csv(in);
    if (rows.size() != cfg.targets.size())
      throw ConfigError("solution file does not match the number of targets");
    std::vector<double> q;
    for (const auto& r : rows) q.push_back(r.q);
    return ScheduleDistribution(q);
  }
  const auto rep = solve_op(cfg.targets, cfg.constraints, cfg.solver);
  if (!rep.feasible) throw InfeasibleError(rep.diagnostic);
  return rep.distribution();
}

/// Centralized or distributed solve according to the scenario and flags.
inline SolveReport solve_scenario(const ScenarioConfig& cfg, const CommandOptions& opt) {
  if (opt.distributed || cfg.topology) {
    const Topology topo = cfg.topology ? *cfg.topology : Topology::complete(cfg.targets.size());
    DistributedOptions dopt;
    dopt.eps = cfg.solver.outer_tol;
    dopt.inner_tol = cfg.solver.inner_tol;
    dopt.consensus_tol = cfg.consensus_tol;
    dopt.mare = cfg.solver.mare;
    try {
      auto drep = run_distributed_op(cfg.targets, topo, cfg.constraints, dopt);
      return drep.per_node.front();
    } catch (const InfeasibleError& e) {
      SolveReport r;
      r.diagnostic = e.what();
      return r;
    }
  }
  return solve_op(cfg.targets, cfg.constraints, cfg.solver);
}

inline int cmd_solve(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  const auto rep = solve_scenario(cfg, opt);
  if (!rep.feasible) {
    log << "infeasible: " << rep.diagnostic
        << " (the critical probabilities must sum to less than 1)\n";
    return kExitInfeasible;
  }
  log << "gamma* = " << detail::num(rep.gamma_star, 6) << "  (" << rep.outer_iterations
      << " outer iterations" << (opt.distributed || cfg.topology ? ", distributed" : "") << ")\n";
  log << "target  label            q*          cost        q_c\n";
  for (std::size_t i = 0; i < cfg.targets.size(); ++i) {
    char line[160];
    std::snprintf(line, sizeof line, "%-7zu %-16s %-11.6f %-11.4f %.6f\n", i,
                  cfg.targets[i].label().c_str(), rep.per_target[i].q, rep.per_target[i].cost,
                  rep.per_target[i].q_critical);
    log << line;
  }
  auto os = detail::open_output(opt.out_dir, "solution.csv");
  write_solution_csv(os, cfg.targets, rep);
  return kExitOk;
}

inline ScheduleSequence make_schedule(const ScenarioConfig& cfg, const ScheduleDistribution& q,
                                      ScheduleKind kind, std::size_t length, std::uint64_t seed,
                                      std::size_t* collisions = nullptr) {
  switch (kind) {
    case ScheduleKind::Random: return sample_stochastic_schedule(q, length, seed);
    case ScheduleKind::MinConsecutive: return build_min_consecutive_schedule(q, length);
    case ScheduleKind::Csma: {
      BackoffConfig b = cfg.schedule.backoff;
      b.duration = length;
      auto r = simulate_csma_schedule(q, b, seed);
      if (collisions) *collisions = r.collisions;
      return std::move(r.sequence);
    }
  }
  throw ConfigError("unknown schedule kind");
}

inline int cmd_schedule(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  const auto q = obtain_distribution(cfg, opt);
  const std::uint64_t seed = opt.seed.value_or(cfg.schedule.seed);
  const std::size_t length =
      opt.kind == ScheduleKind::Csma ? cfg.schedule.backoff.duration : cfg.schedule.length;
  std::size_t collisions = 0;
  const auto seq = make_schedule(cfg, q, opt.kind, length, seed, &collisions);

  const auto counts = seq.counts();
  log << "schedule kind=" << to_string(opt.kind) << " L=" << seq.size()
      << " max_run_length=" << max_run_length(seq);
  if (opt.kind == ScheduleKind::Csma) log << " collisions=" << collisions;
  log << "\ntarget  count     frequency   q*\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    char line[128];
    std::snprintf(line, sizeof line, "%-7zu %-9zu %-11.6f %.6f\n", i, counts[i],
                  static_cast<double>(counts[i]) / static_cast<double>(seq.size()), q[i]);
    log << line;
  }
  auto os = detail::open_output(opt.out_dir, std::string("schedule_") + to_string(opt.kind) + ".txt");
  write_schedule(os, seq);
  return kExitOk;
}

inline int cmd_simulate(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  const auto q = obtain_distribution(cfg, opt);
  const std::uint64_t seed = opt.seed.value_or(cfg.schedule.seed);
  const std::size_t steps = cfg.simulate.steps;

  MonteCarloOptions mco;
  mco.record_mean_series = true;
  const auto mc = monte_carlo_expected_cost(cfg.targets, q, steps, cfg.simulate.runs, seed, mco);
  {
    auto os = detail::open_output(opt.out_dir, "montecarlo.csv");
    os << "target,label,q,mean_cost,half_width_95,mare_bound\n";
    for (std::size_t i = 0; i < cfg.targets.size(); ++i)
      os << i << ',' << detail::csv_field(cfg.targets[i].label()) << ',' << detail::num(q[i]) << ','
         << detail::num(mc.per_target_mean[i], 12) << ','
         << detail::num(mc.per_target_half_width[i], 12) << ','
         << detail::num(fixed_point_cost(cfg.targets[i], q[i], cfg.constraints.loss_rate(i),
                                         cfg.solver.mare),
                        12)
         << '\n';
  }
  {
    auto os = detail::open_output(opt.out_dir, "expected_trace.csv");
    detail::write_series_csv(os, mc.mean_series);
  }

  // One concrete schedule of the requested kind, costed and tracked.
  const auto seq = make_schedule(cfg, q, opt.kind, steps, seed);
  EvaluateOptions eo;
  eo.record_series = true;
  const auto cost = evaluate_schedule(cfg.targets, seq, default_initial_covariances(cfg.targets), eo);
  {
    auto os = detail::open_output(opt.out_dir, "trace_series.csv");
    detail::write_series_csv(os, cost.trace_series);
  }
  const auto track = simulate_tracking(cfg.targets, seq, detail::derive_seed(seed, 0xC0FFEE));
  {
    auto os = detail::open_output(opt.out_dir, "tracking.csv");
    os << "step,observed";
    for (std::size_t i = 0; i < cfg.targets.size(); ++i)
      os << ",target_" << i << "_true,target_" << i << "_estimate";
    os << '\n';
    for (Eigen::Index k = 0; k < track.truth.rows(); ++k) {
      os << k + 1 << ',' << seq[static_cast<std::size_t>(k)];
      for (Eigen::Index i = 0; i < track.truth.cols(); ++i)
        os << ',' << detail::num(track.truth(k, i), 12) << ',' << detail::num(track.estimate(k, i), 12);
      os << '\n';
    }
  }

  log << "Monte Carlo: " << mc.runs << " runs x " << mc.steps << " steps\n";
  log << "target  mean cost   +-95%      MARE bound\n";
  for (std::size_t i = 0; i < cfg.targets.size(); ++i) {
    char line[128];
    std::snprintf(line, sizeof line, "%-7zu %-11.4f %-10.4f %.4f\n", i, mc.per_target_mean[i],
                  mc.per_target_half_width[i],
                  fixed_point_cost(cfg.targets[i], q[i], cfg.constraints.loss_rate(i), cfg.solver.mare));
    log << line;
  }
  log << to_string(opt.kind) << " schedule cost (max over targets): "
      << detail::num(cost.max_over_targets, 6) << '\n';
  return kExitOk;
}

struct ComparisonRow {
  std::string method;
  bool ok = false;
  double max_cost = 0.0;
  double half_width = 0.0;
  std::vector<double> per_target;
  std::string error;
};

inline std::vector<ComparisonRow> run_comparison(const ScenarioConfig& cfg, const SolveReport& rep,
                                                 std::uint64_t seed, std::optional<std::size_t> window) {
  std::vector<ComparisonRow> rows;
  const auto q = rep.distribution();
  const auto p0 = default_initial_covariances(cfg.targets);
  auto attempt = [&](std::string name, auto&& fn) {
    ComparisonRow row;
    row.method = std::move(name);
    try {
      fn(row);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  };

  attempt("op_bound", [&](ComparisonRow& r) {
    r.max_cost = rep.gamma_star;
    for (const auto& p : rep.per_target) r.per_target.push_back(p.cost);
  });
  attempt("stochastic_monte_carlo", [&](ComparisonRow& r) {
    const auto mc = monte_carlo_expected_cost(cfg.targets, q, cfg.simulate.steps, cfg.simulate.runs, seed);
    r.max_cost = mc.max_over_targets;
    r.per_target = mc.per_target_mean;
    for (std::size_t i = 0; i < mc.per_target_mean.size(); ++i)
      if (mc.per_target_mean[i] == mc.max_over_targets) r.half_width = mc.per_target_half_width[i];
  });
  attempt("min_consecutive", [&](ComparisonRow& r) {
    const auto seq = build_min_consecutive_schedule(q, cfg.schedule.length);
    EvaluateOptions eo;
    eo.cycles = cfg.simulate.cycles;
    const auto c = evaluate_schedule(cfg.targets, seq, p0, eo);
    r.max_cost = c.max_over_targets;
    r.per_target = c.per_target_avg;
  });
  if (window) {
    attempt("sliding_window_" + std::to_string(*window), [&](ComparisonRow& r) {
      const auto sw = sliding_window_schedule(cfg.targets, *window, cfg.simulate.steps, p0);
      r.max_cost = sw.cost.max_over_targets;
      r.per_target = sw.cost.per_target_avg;
    });
  }
  return rows;
}

inline int cmd_compare(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  const auto rep = solve_scenario(cfg, opt);
  if (!rep.feasible) {
    log << "infeasible: " << rep.diagnostic << '\n';
    return kExitInfeasible;
  }
  const std::uint64_t seed = opt.seed.value_or(cfg.schedule.seed);
  const auto window = opt.window ? opt.window : cfg.simulate.window;
  const auto rows = run_comparison(cfg, rep, seed, window);

  auto os = detail::open_output(opt.out_dir, "comparison.csv");
  os << "method,ok,max_cost,half_width_95";
  for (std::size_t i = 0; i < cfg.targets.size(); ++i) os << ",target_" << i << "_cost";
  os << ",error\n";
  log << "q* =";
  for (double v : rep.q_star) log << ' ' << detail::num(v, 4);
  log << "\nmethod                     max cost\n";
  for (const auto& r : rows) {
    os << r.method << ',' << (r.ok ? 1 : 0) << ',' << detail::num(r.max_cost, 12) << ','
       << detail::num(r.half_width, 12);
    for (std::size_t i = 0; i < cfg.targets.size(); ++i)
      os << ',' << (i < r.per_target.size() ? detail::num(r.per_target[i], 12) : std::string());
    os << ',' << detail::csv_field(r.error) << '\n';
    char line[200];
    if (r.ok)
      std::snprintf(line, sizeof line, "%-26s %.4f\n", r.method.c_str(), r.max_cost);
    else
      std::snprintf(line, sizeof line, "%-26s failed: %s\n", r.method.c_str(), r.error.c_str());
    log << line;
  }
  return kExitOk;
}

}  // namespace stosched
