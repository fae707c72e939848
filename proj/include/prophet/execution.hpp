#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "prophet/core.hpp"

namespace prophet {

using StateReader = std::function<Value(const StorageKey&)>;

/// A maximal run of trace steps executed on one shard. Control enters a
/// segment either at the start of the trace or through a cross-shard message
/// and leaves it through the next message or at the end of the trace.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  ShardId shard = 0;
  int inbound = -1;   // index of the message that entered this segment
  int outbound = -1;  // index of the message that left it
};

struct SegmentPlan {
  std::vector<Segment> segments;
  /// Message skeletons in call order; values are filled in by execution.
  std::vector<CrossShardMessage> messages;
};

/// Splits a trace into per-shard segments. Control moves with Call steps and
/// with reads/writes of a contract other than the current one; a message is
/// recorded whenever that move crosses shards (implicit moves carry 0 bytes).
SegmentPlan plan_segments(const Transaction& txn, const Placement& placement);

/// Per-transaction scratch shared by the segments executed on one node.
struct ExecutionScratch {
  std::map<StorageKey, Value> reads;   // first external read per key
  std::map<StorageKey, Value> writes;  // buffered writes, final value per key
};

Value initial_digest(TxnId txn);

/// Runs steps [seg.begin, seg.end) starting from `digest`. Reads consult the
/// scratch write buffer first and `reader` otherwise.
Value run_segment(const Transaction& txn, const Segment& seg, Value digest, const StateReader& reader,
                  ExecutionScratch& scratch);

struct ExecutionRecord {
  std::map<StorageKey, Value> reads;
  std::map<StorageKey, Value> writes;
  std::vector<CrossShardMessage> messages;
  Value result = 0;
  double compute_ms = 0.0;
};

/// Deterministic execution of a whole trace against one consistent state.
ExecutionRecord execute(const Transaction& txn, const Placement& placement, const StateReader& reader);

/// Profile of a transaction given its execution record.
TransactionProfile make_profile(const Transaction& txn, const ExecutionRecord& rec, Granularity granularity,
                                Round base_round, std::uint32_t coalition_id, std::uint32_t attempt = 0);

/// Outcome of re-executing the part of a transaction owned by one shard.
struct ShardExecution {
  bool matches = false;        // everything observed agrees with the profile
  bool reads_match = false;    // observed read values equal the profile's
  bool structure_ok = false;   // message skeleton and rw-set agree with the trace
  std::map<StorageKey, Value> reads;
  std::map<StorageKey, Value> writes;
  std::vector<StorageKey> touched;  // keys on this shard read or written by the trace
  double compute_ms = 0.0;
};

/// Re-executes the segments of `txn` owned by `shard`, taking inbound values
/// from the profile's messages instead of talking to other shards.
ShardExecution execute_on_shard(const Transaction& txn, const Placement& placement, ShardId shard,
                                const TransactionProfile& profile, const StateReader& reader);

}  // namespace prophet
