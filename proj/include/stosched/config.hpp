#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stosched/distributed.hpp"
#include "stosched/model.hpp"
#include "stosched/optimizer.hpp"
#include "stosched/schedule.hpp"

namespace stosched {

struct ScheduleSettings {
  std::size_t length = 500;
  std::uint64_t seed = 1;
  BackoffConfig backoff{};
};

struct SimulateSettings {
  std::size_t steps = 500;
  std::size_t runs = 1000;
  std::optional<std::size_t> window;
  std::size_t cycles = 4;  ///< repetitions of a periodic schedule when costing it
};

/// Everything a CLI run needs, validated on load.
struct ScenarioConfig {
  std::vector<LtiTarget> targets;
  Constraints constraints;
  std::optional<Topology> topology;
  SolverOptions solver;
  double consensus_tol = 1e-12;
  ScheduleSettings schedule;
  SimulateSettings simulate;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& where,
                                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

inline double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(what + " must be a number");
  return j.get<double>();
}

inline std::size_t count(const json& j, const std::string& what) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError(what + " must be a non-negative integer");
  return j.get<std::size_t>();
}

// Row-major nested array; a bare number is read as a 1x1 matrix.
inline Matrix matrix(const json& j, const std::string& what) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw ConfigError(what + " must be a non-empty nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) throw ConfigError(what + " rows must be non-empty arrays");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError(what + " is ragged");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

inline std::vector<double> numbers(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  std::vector<double> v;
  for (const auto& x : j) v.push_back(number(x, what));
  return v;
}

inline LtiTarget parse_target(const json& j, std::size_t index) {
  const std::string where = "targets[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::string label =
      j.contains("label") ? j.at("label").get<std::string>() : "target_" + std::to_string(index);
  if (j.contains("delay_chain")) {
    reject_unknown_keys(j, where, {"label", "delay_chain", "cost"});
    const auto& dc = j.at("delay_chain");
    reject_unknown_keys(dc, where + ".delay_chain", {"a", "Q", "R", "d"});
    DelayChainSpec spec;
    spec.a = dc.contains("a") ? number(dc.at("a"), "a") : 1.0;
    spec.q = number(dc.at("Q"), where + ".Q");
    spec.r = number(dc.at("R"), where + ".R");
    spec.d = static_cast<int>(count(dc.at("d"), where + ".d"));
    DelayChainCost cost = DelayChainCost::CurrentState;
    if (j.contains("cost")) {
      const auto s = j.at("cost").get<std::string>();
      if (s == "trace") cost = DelayChainCost::FullTrace;
      else if (s != "current_state") throw ConfigError(where + ".cost must be 'current_state' or 'trace'");
    }
    return expand_delay_chain(spec, cost, label);
  }
  reject_unknown_keys(j, where, {"label", "A", "C", "Q", "R", "cost_weight"});
  for (const char* k : {"A", "C", "Q", "R"})
    if (!j.contains(k)) throw ConfigError(where + " is missing " + k);
  std::optional<Matrix> w;
  if (j.contains("cost_weight")) w = matrix(j.at("cost_weight"), where + ".cost_weight");
  return LtiTarget(matrix(j.at("A"), where + ".A"), matrix(j.at("C"), where + ".C"),
                   matrix(j.at("Q"), where + ".Q"), matrix(j.at("R"), where + ".R"), label, w);
}

inline Topology parse_topology(const json& j, std::size_t n) {
  reject_unknown_keys(j, "topology", {"kind", "adjacency"});
  if (j.contains("adjacency")) {
    if (j.contains("kind")) throw ConfigError("topology: give either kind or adjacency");
    std::vector<std::vector<std::size_t>> adj;
    for (const auto& row : j.at("adjacency")) {
      std::vector<std::size_t> nb;
      for (const auto& v : row) nb.push_back(count(v, "topology.adjacency entry"));
      adj.push_back(std::move(nb));
    }
    if (adj.size() != n) throw ConfigError("topology must list one node per target");
    return Topology::from_adjacency(adj);
  }
  const auto kind = j.value("kind", std::string("complete"));
  if (kind == "complete") return Topology::complete(n);
  if (kind == "ring") return Topology::ring(n);
  if (kind == "line") return Topology::line(n);
  throw ConfigError("topology.kind must be complete, ring or line");
}

}  // namespace detail

/// Parses and validates a scenario; any unknown key is an error.
inline ScenarioConfig parse_config(const nlohmann::json& j) {
  using detail::count;
  using detail::number;
  detail::reject_unknown_keys(j, "config",
                              {"targets", "constraints", "topology", "solver", "schedule", "simulate"});
  ScenarioConfig cfg;
  if (!j.contains("targets") || !j.at("targets").is_array() || j.at("targets").empty())
    throw ConfigError("config needs a non-empty 'targets' array");
  std::size_t i = 0;
  for (const auto& t : j.at("targets")) cfg.targets.push_back(detail::parse_target(t, i++));
  for (std::size_t k = 0; k < cfg.targets.size(); ++k) {
    const auto rep = validate_target(cfg.targets[k]);
    if (!rep.valid()) {
      std::string msg = "target " + std::to_string(k) + " is invalid:";
      for (const auto& is : rep.issues)
        if (is.severity == Severity::Error) msg += " " + is.message + ";";
      throw ConfigError(msg);
    }
  }

  if (j.contains("constraints")) {
    const auto& c = j.at("constraints");
    detail::reject_unknown_keys(c, "constraints", {"priorities", "loss"});
    if (c.contains("priorities")) cfg.constraints.priorities = detail::numbers(c.at("priorities"), "priorities");
    if (c.contains("loss")) cfg.constraints.loss = detail::numbers(c.at("loss"), "loss");
    cfg.constraints.validate(cfg.targets.size());
  }
  if (j.contains("topology")) cfg.topology = detail::parse_topology(j.at("topology"), cfg.targets.size());

  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    detail::reject_unknown_keys(s, "solver",
                                {"outer_tol", "inner_tol", "mare_tol", "mare_max_iter", "consensus_tol"});
    if (s.contains("outer_tol")) cfg.solver.outer_tol = number(s.at("outer_tol"), "outer_tol");
    if (s.contains("inner_tol")) cfg.solver.inner_tol = number(s.at("inner_tol"), "inner_tol");
    if (s.contains("mare_tol")) cfg.solver.mare.tol = number(s.at("mare_tol"), "mare_tol");
    if (s.contains("mare_max_iter")) cfg.solver.mare.max_iter = count(s.at("mare_max_iter"), "mare_max_iter");
    if (s.contains("consensus_tol")) cfg.consensus_tol = number(s.at("consensus_tol"), "consensus_tol");
    if (!(cfg.solver.outer_tol > 0 && cfg.solver.inner_tol > 0 && cfg.solver.mare.tol > 0 &&
          cfg.consensus_tol > 0))
      throw ConfigError("solver tolerances must be positive");
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    detail::reject_unknown_keys(s, "schedule", {"L", "seed", "backoff"});
    if (s.contains("L")) cfg.schedule.length = count(s.at("L"), "schedule.L");
    if (s.contains("seed")) cfg.schedule.seed = s.at("seed").get<std::uint64_t>();
    if (s.contains("backoff")) {
      const auto& b = s.at("backoff");
      detail::reject_unknown_keys(b, "schedule.backoff", {"alpha", "epsilon_jitter", "duration"});
      if (b.contains("alpha")) cfg.schedule.backoff.alpha = number(b.at("alpha"), "alpha");
      if (b.contains("epsilon_jitter"))
        cfg.schedule.backoff.epsilon_jitter = number(b.at("epsilon_jitter"), "epsilon_jitter");
      if (b.contains("duration")) cfg.schedule.backoff.duration = count(b.at("duration"), "duration");
    }
    if (cfg.schedule.length == 0) throw ConfigError("schedule.L must be >= 1");
  }
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    detail::reject_unknown_keys(s, "simulate", {"T", "runs", "window", "cycles"});
    if (s.contains("T")) cfg.simulate.steps = count(s.at("T"), "simulate.T");
    if (s.contains("runs")) cfg.simulate.runs = count(s.at("runs"), "simulate.runs");
    if (s.contains("window")) cfg.simulate.window = count(s.at("window"), "simulate.window");
    if (s.contains("cycles")) cfg.simulate.cycles = count(s.at("cycles"), "simulate.cycles");
    if (cfg.simulate.steps == 0 || cfg.simulate.runs == 0 || cfg.simulate.cycles == 0)
      throw ConfigError("simulate.T, runs and cycles must be >= 1");
  }
  return cfg;
}

inline ScenarioConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    return parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config has a wrongly typed field: ") + e.what());
  }
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace stosched
