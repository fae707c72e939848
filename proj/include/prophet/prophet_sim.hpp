#pragma once

#include <vector>

#include "prophet/history.hpp"
#include "prophet/simnet.hpp"

namespace prophet {

struct ProphetTrace {
  /// exec_done[s][r-1]: when shard s finished executing round r.
  std::vector<std::vector<SimTime>> exec_done;
};

/// Runs the four-phase protocol over `txns` (sorted by issue time or not)
/// and returns the outcome. `trace`, when given, receives per-shard timings.
RunResult run_prophet(const std::vector<Transaction>& txns, const Placement& placement, const SimConfig& config,
                      ProphetTrace* trace = nullptr);

}  // namespace prophet
