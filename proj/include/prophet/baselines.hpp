#pragma once

#include <vector>

#include "prophet/history.hpp"
#include "prophet/simnet.hpp"

namespace prophet {

/// Monoxide-style OCC: hops run in consecutive rounds of the shards they
/// touch, writes are visible immediately, and the final hop validates that
/// nothing the transaction observed or wrote was changed by anyone else.
/// Failed validation withdraws the writes and retries; more than max_retry
/// retries aborts the transaction for good.
RunResult run_occ(const std::vector<Transaction>& txns, const Placement& placement, const SimConfig& config);

/// Client-driven 2PL with release-on-conflict: the client learns the key set,
/// asks every related shard for key-level locks, and releases everything and
/// retries if any shard refuses.
RunResult run_2pl(const std::vector<Transaction>& txns, const Placement& placement, const SimConfig& config);

}  // namespace prophet
