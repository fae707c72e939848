#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "prophet/core.hpp"
#include "prophet/execution.hpp"
#include "prophet/versioned_store.hpp"

namespace prophet {

enum class TxnStatus { Pending, Confirmed, Invalidated };

struct Resolution {
  InstanceId instance = 0;
  TxnStatus status = TxnStatus::Pending;
  bool cascade = false;  // invalidated only because a predecessor was
};

/// One shard's view of the correction phase. Applies confirmation Rule 1:
/// an instance confirms once every related shard's proof and the order proof
/// say Valid and all its predecessors have confirmed. Any Invalid verdict or
/// invalid predecessor invalidates it.
class ConfirmationTracker {
 public:
  /// Returns the instances resolved by this proof, in resolution order.
  /// Proofs with a dishonest attestation are dropped.
  std::vector<Resolution> on_proof(const Proof& proof);

  TxnStatus status(InstanceId instance) const;
  std::size_t rejected_proofs() const { return rejected_proofs_; }

 private:
  struct Entry {
    TxnStatus status = TxnStatus::Pending;
    std::vector<ShardId> needed;
    std::vector<ShardId> got;
    bool order_ok = false;
    std::vector<InstanceId> preds;
    std::vector<InstanceId> waiters;
  };

  void settle(InstanceId start, std::vector<Resolution>& out);

  std::unordered_map<InstanceId, Entry> entries_;
  std::size_t rejected_proofs_ = 0;
};

struct BlockExecution {
  Proof proof;  // attestation left for consensus to fill in
  double compute_ms = 0.0;
  std::size_t applied = 0;
};

/// A shard: its slice of versioned state, its execution cursor and its view
/// of confirmations.
class ShardRuntime {
 public:
  ShardRuntime(ShardId id, const Placement* placement, OrderingRule rule);

  ShardId id() const { return id_; }
  Round next_round() const { return next_round_; }

  /// Executes one block at the optimistic head. Rounds must arrive in order;
  /// pass an empty block to skip a round with no work for this shard.
  BlockExecution execute_block(const Block& block, const TxnLookup& lookup);

  /// Feeds a proof to this shard's view and rolls back whatever it invalidates.
  std::vector<Resolution> receive_proof(const Proof& proof);

  TxnStatus status(InstanceId instance) const { return tracker_.status(instance); }
  const VersionedStore& store() const { return store_; }
  const ConfirmationTracker& tracker() const { return tracker_; }

  /// Latest value of every key this shard holds, counting confirmed writers only.
  std::map<StorageKey, Value> confirmed_state() const;

 private:
  ShardId id_;
  const Placement* placement_;
  OrderingRule rule_;
  Round next_round_ = 0;
  VersionedStore store_;
  ConfirmationTracker tracker_;
};

}  // namespace prophet
