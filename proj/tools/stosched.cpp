#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stosched/commands.hpp"

int main(int argc, char** argv) {
  using namespace stosched;
  CLI::App app{"Sensor scheduling for multi-target Kalman tracking"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::string kind = "minconsec";
  std::size_t window = 0;
  bool distributed = false;
  std::string solution;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "scenario JSON file")->required();
    sub->add_option("--out", out_dir, "directory for CSV and schedule files");
    sub->add_option("--seed", seed, "overrides schedule.seed");
    sub->add_flag("--distributed", distributed, "solve with the consensus-based protocol");
  };
  auto* solve = app.add_subcommand("solve", "optimal sensing distribution q*");
  add_common(solve);
  auto* schedule = app.add_subcommand("schedule", "turn q* into a concrete sequence");
  add_common(schedule);
  schedule->add_option("--kind", kind, "random | minconsec | csma");
  schedule->add_option("--solution", solution, "solution.csv from a previous solve");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo and tracking runs");
  add_common(simulate);
  simulate->add_option("--kind", kind, "schedule kind for the tracking run");
  simulate->add_option("--solution", solution, "solution.csv from a previous solve");
  auto* compare = app.add_subcommand("compare", "bound vs. empirical vs. deterministic schedules");
  add_common(compare);
  compare->add_option("--window", window, "also run sliding-window search with this lookahead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const ScenarioConfig cfg = load_config(config_path);
    CommandOptions opt;
    opt.out_dir = out_dir;
    opt.distributed = distributed;
    for (auto* sub : {solve, schedule, simulate, compare})
      if (sub->parsed() && sub->count("--seed")) opt.seed = seed;
    if (!solution.empty()) opt.solution = solution;
    if (window > 0) opt.window = window;
    opt.kind = parse_schedule_kind(kind);

    if (solve->parsed()) return cmd_solve(cfg, opt, std::cout);
    if (schedule->parsed()) return cmd_schedule(cfg, opt, std::cout);
    if (simulate->parsed()) return cmd_simulate(cfg, opt, std::cout);
    return cmd_compare(cfg, opt, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}
