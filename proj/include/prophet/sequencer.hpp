#pragma once

#include <map>
#include <span>
#include <vector>

#include "prophet/core.hpp"
#include "prophet/simnet.hpp"

namespace prophet {

struct Candidate {
  const Transaction* txn = nullptr;
  TransactionProfile profile;
  std::uint32_t deferrals = 0;  // rounds this transaction has already been rejected
};

struct AdmissionOptions {
  std::size_t block_capacity = 0;   // per-shard limit; 0 = unlimited
  std::uint32_t max_deferral = 0;   // 0 disables starvation priority
  const Placement* placement = nullptr;  // required when block_capacity > 0
};

struct OrderResult {
  GlobalOrder order;
  std::vector<TxnId> rejected;           // conflicted with an admitted transaction
  std::vector<TxnId> capacity_deferred;  // did not fit in some shard's block
};

/// Greedy admission in arrival order (issue time, then txn id). Candidates
/// deferred `max_deferral` times or more are scanned first. Profiles may be
/// coarser than needed only in the direction state -> contract.
OrderResult build_order(std::span<const Candidate> candidates, const OrderingRule& rule, Round round,
                        const AdmissionOptions& opts = {});

/// Moves rejected candidates in front of the admitted transaction they only
/// read from; a move is kept iff the admission scan then admits strictly more.
std::vector<Candidate> reorder(std::span<const Candidate> candidates, const OrderingRule& rule);

/// Flags entries that conflict with an earlier, unflagged entry.
std::vector<bool> admission_violations(std::span<const OrderEntry> entries, const OrderingRule& rule);

/// Per-shard blocks of an order. Only shards with at least one transaction appear.
std::map<ShardId, Block> split_per_shard(const GlobalOrder& order, const Placement& placement,
                                         const TxnLookup& lookup);

std::size_t block_wire_bytes(const Block& block);

struct DispatchEvent {
  ShardId shard = 0;
  SimTime send_time = 0.0;
  SimTime arrival_time = 0.0;
  std::size_t bytes = 0;
};

/// Dispatch of blocks to shards. Pipelined sends at `now`; Serial waits for
/// the sequence shard's consensus (`seq_consensus_ms`) first.
std::vector<DispatchEvent> propose(const GlobalOrder& order, const std::map<ShardId, Block>& blocks,
                                   DispatchMode mode, SimTime now, double seq_consensus_ms, const SimConfig& config);

}  // namespace prophet
