#pragma once

#include <map>
#include <set>
#include <span>
#include <vector>

#include "prophet/execution.hpp"
#include "prophet/simnet.hpp"

namespace prophet {

struct TxnCost {
  double compute_ms = 0.0;
  double comm_ms = 0.0;
};

struct TimingParams {
  double latency_ms = 2.0;
  double bandwidth_mbps = 20.0;
};

/// Compute time and cross-shard round-trip time of pre-executing one transaction.
TxnCost txn_cost(const Transaction& txn, const Placement& placement, const TimingParams& timing);

/// Makespan of a coalition pre-executing a batch in the given cooperation mode.
///  Sequential: every transaction computes then communicates, one at a time.
///  Overlap: a two-stage pipeline; communication of txn i overlaps compute of txn i+1.
///  Parallel(p): p lanes, each a sequential stream; a txn goes to the earliest free lane.
double simulate_timing(const CooperationMode& mode, std::span<const TxnCost> costs);

struct HashRange {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;  // exclusive unless to_end
  bool to_end = false;   // range runs to the top of the hash space

  bool contains(std::uint64_t h) const { return h >= lo && (to_end || h < hi); }
};

/// Hash that routes a transaction attempt to a coalition.
inline std::uint64_t routing_hash(TxnId txn, std::uint32_t attempt) { return mix(txn * 0x9e37ULL, attempt); }

struct Coalition {
  std::uint32_t id = 0;
  std::map<ShardId, NodeId> members;  // one member per shard it can execute
  CooperationMode mode;
  HashRange range;
};

struct PreExecRequest {
  const Transaction* txn = nullptr;
  std::uint32_t attempt = 0;
};

struct PreExecResult {
  TransactionProfile profile;
  double makespan_contribution = 0.0;
  bool corrupted = false;  // ground truth; never consulted by protocol logic
};

struct PreExecBatch {
  std::vector<PreExecResult> results;
  std::vector<TxnId> skipped;  // touched a shard the coalition has no member on
  double makespan_ms = 0.0;
};

struct PreExecContext {
  const Placement* placement = nullptr;
  const NodeAssignment* assignment = nullptr;
  Granularity granularity = Granularity::StateLevel;
  TimingParams timing;
  std::uint64_t seed = 0;
};

/// Pre-executes every request against one snapshot. Writes stay in a per-txn
/// buffer, so each transaction sees exactly `snapshot`. A malicious member on
/// a touched shard corrupts the profile.
PreExecBatch pre_execute(const Coalition& coalition, std::span<const PreExecRequest> requests,
                         const StateReader& snapshot, Round base_round, const PreExecContext& ctx);

/// Applies the deterministic Byzantine corruption a malicious member on
/// `shard` makes to a profile. Returns false if nothing on that shard can be
/// corrupted.
bool corrupt_profile(TransactionProfile& profile, const Transaction& txn, ShardId shard, const Placement& placement,
                     Rng& rng);

struct InvalidFeedback {
  InstanceId instance = 0;
  std::uint32_t coalition_id = 0;
  std::vector<ShardId> blamed_shards;
};

/// Live coalitions plus the blacklist each honest node keeps.
class CoalitionRegistry {
 public:
  CoalitionRegistry() = default;

  /// Round-robin formation: coalition j takes the j-th member of each shard.
  static CoalitionRegistry round_robin(const NodeAssignment& assignment, std::uint32_t n_coalitions,
                                       CooperationMode mode);

  const std::vector<Coalition>& coalitions() const { return coalitions_; }
  std::vector<Coalition>& coalitions() { return coalitions_; }
  const Coalition& coalition_for(TxnId txn, std::uint32_t attempt) const;
  const std::set<NodeId>& blacklist(NodeId node) const;

  /// Honest members of a coalition whose profile was invalidated drop the
  /// blamed members, blacklist them and recruit a partner from the same shard
  /// that none of them has flagged.
  void churn(const std::vector<InvalidFeedback>& feedback, const NodeAssignment& assignment, Rng& rng);

 private:
  void assign_ranges();

  std::vector<Coalition> coalitions_;
  std::map<NodeId, std::set<NodeId>> blacklists_;
};

std::vector<Coalition> coalition_churn(const CoalitionRegistry& registry, const std::vector<InvalidFeedback>& feedback,
                                       const NodeAssignment& assignment, Rng& rng);

}  // namespace prophet
