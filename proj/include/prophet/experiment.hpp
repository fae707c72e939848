#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "prophet/history.hpp"
#include "prophet/metrics.hpp"
#include "prophet/simnet.hpp"
#include "prophet/workload.hpp"

namespace prophet {

struct ExperimentConfig {
  Mechanism mechanism = Mechanism::Prophet;
  WorkloadParams workload = WorkloadParams::conflict_heavy();
  SimConfig sim;
  std::string trace_path;  // replaces the generated workload when set
  std::uint64_t placement_seed = 7;
  bool verify = true;  // replay the committed history through the oracle
};

/// Applies one `key = value` setting. Unknown keys and bad values throw an
/// Error naming the key.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines; `#` starts a comment. `workload = <preset>`
/// is applied before any other key regardless of where it appears.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

struct Scenario {
  std::vector<Transaction> txns;
  Placement placement;
};

Scenario build_scenario(const ExperimentConfig& cfg);

RunResult run_mechanism(const Scenario& scenario, const ExperimentConfig& cfg);

struct ExperimentOutput {
  RunResult run;
  MetricsReport report;
};

/// Builds the scenario, runs the mechanism, and (if cfg.verify) checks the
/// committed history against the oracle; a failed check lands in violations.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// Reference sweep: one run after another.
std::vector<MetricsReport> run_sweep_serial(const std::vector<ExperimentConfig>& points);
/// Same results as run_sweep_serial, with independent runs spread over OpenMP threads.
std::vector<MetricsReport> run_sweep_parallel(const std::vector<ExperimentConfig>& points);

/// Share of a batch rejected when every transaction is pre-executed against
/// genesis and the batch is ordered once under `rule`.
double batch_conflict_ratio(std::span<const Transaction> batch, const Placement& placement, const OrderingRule& rule);

}  // namespace prophet
