#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace prophet {

using ContractId = std::uint32_t;
using ShardId = std::uint32_t;
using NodeId = std::uint32_t;
using TxnId = std::uint64_t;
using Round = std::int64_t;
using Value = std::uint64_t;
using SimTime = double;  // simulated milliseconds

/// Identifies one sequencing attempt of a transaction. A transaction that is
/// invalidated and pre-executed again gets a fresh instance.
using InstanceId = std::uint64_t;

constexpr InstanceId make_instance(TxnId txn, std::uint32_t attempt) {
  return (txn << 16) | (attempt & 0xffffu);
}
constexpr TxnId instance_txn(InstanceId id) { return id >> 16; }
constexpr std::uint32_t instance_attempt(InstanceId id) { return static_cast<std::uint32_t>(id & 0xffffu); }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Slot value used when a key stands for a whole contract (contract-level sets).
constexpr std::uint32_t kWholeContract = 0xffffffffu;

struct StorageKey {
  ContractId contract = 0;
  std::uint32_t slot = 0;

  auto operator<=>(const StorageKey&) const = default;
  bool whole_contract() const { return slot == kWholeContract; }
};

struct StorageKeyHash {
  std::size_t operator()(const StorageKey& k) const noexcept {
    std::uint64_t x = (std::uint64_t{k.contract} << 32) | k.slot;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

// Trace steps.
struct ComputeStep {
  double cost_ms = 0.0;
  bool operator==(const ComputeStep&) const = default;
};
struct ReadStep {
  StorageKey key;
  bool operator==(const ReadStep&) const = default;
};
struct WriteStep {
  StorageKey key;
  bool operator==(const WriteStep&) const = default;
};
struct CallStep {
  ContractId target = 0;
  std::uint32_t payload_bytes = 0;
  std::uint32_t return_bytes = 0;
  bool operator==(const CallStep&) const = default;
};
using Step = std::variant<ComputeStep, ReadStep, WriteStep, CallStep>;

struct Transaction {
  TxnId id = 0;
  SimTime issue_time = 0.0;
  std::uint64_t fee = 0;
  std::vector<Step> trace;

  /// The first contract referenced by the trace. Throws if the trace names none.
  ContractId entry_contract() const;
  /// Number of Call steps.
  std::size_t call_count() const;
  bool operator==(const Transaction&) const = default;
};

enum class Granularity { ContractLevel, StateLevel };
enum class DependencyRule { Disjoint, RWDependency };

struct ReadWriteSet {
  Granularity granularity = Granularity::StateLevel;
  std::set<StorageKey> reads;
  std::set<StorageKey> writes;

  /// Coarsen to `target`. Refining a contract-level set is impossible and throws.
  ReadWriteSet project(Granularity target) const;
  bool operator==(const ReadWriteSet&) const = default;
};

struct OrderingRule {
  Granularity granularity = Granularity::StateLevel;
  DependencyRule dependency = DependencyRule::RWDependency;
  bool reorder_enabled = false;

  /// Parses `contract|state|rwdep[,reorder]`.
  static OrderingRule parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const OrderingRule&) const = default;
};

struct CrossShardMessage {
  std::uint32_t seq = 0;
  ContractId from_contract = 0;
  ContractId to_contract = 0;
  std::uint32_t payload_bytes = 0;
  std::uint32_t return_bytes = 0;
  Value param_value = 0;   // execution digest handed to the callee shard
  Value return_value = 0;  // execution digest when control leaves the callee shard
  bool operator==(const CrossShardMessage&) const = default;
};

struct TransactionProfile {
  TxnId txn_id = 0;
  std::uint32_t attempt = 0;
  ReadWriteSet rw_set;
  std::vector<CrossShardMessage> messages;
  /// First value read from the snapshot for every externally read key.
  std::map<StorageKey, Value> read_values;
  /// Final value written per key.
  std::map<StorageKey, Value> write_values;
  Round base_round = -1;
  std::uint32_t coalition_id = 0;

  InstanceId instance() const { return make_instance(txn_id, attempt); }
  std::uint64_t cross_shard_bytes() const;
  bool operator==(const TransactionProfile&) const = default;
};

struct Attestation {
  std::uint32_t issuer = 0;
  bool honest = true;
  std::uint64_t payload_digest = 0;
  bool operator==(const Attestation&) const = default;
};

struct OrderEntry {
  std::uint32_t position = 0;
  InstanceId instance = 0;
  TransactionProfile profile;
};

struct GlobalOrder {
  Round round = 0;
  std::vector<OrderEntry> entries;
};

struct Block {
  ShardId shard_id = 0;
  Round round = 0;
  std::vector<OrderEntry> txns;
  Attestation attestation;
};

enum class Verdict { Valid, Invalid };

/// Why a shard marked a transaction invalid.
enum class InvalidCause {
  None,
  ProfileFault,    // profile disagrees with the snapshot it claims to be based on
  Stale,           // profile was honest for its base round but the state moved
  OrderViolation,  // the order breaks the admission rule
};

struct ProofEntry {
  InstanceId instance = 0;
  Verdict verdict = Verdict::Valid;
  InvalidCause cause = InvalidCause::None;
  std::vector<ShardId> related_shards;
  std::vector<InstanceId> predecessors;  // last writers of keys touched on the issuing shard
  std::uint32_t position = 0;
};

struct Proof {
  ShardId shard_id = 0;
  Round round = 0;
  bool order_proof = false;  // issued by the sequence shard over the whole order
  std::vector<ProofEntry> entries;
  Attestation attestation;

  std::uint64_t digest() const;
  std::size_t wire_bytes() const;
};

class Placement {
 public:
  Placement() = default;
  Placement(std::unordered_map<ContractId, ShardId> map, std::uint32_t n_shards);

  ShardId shard_of(ContractId c) const;
  bool contains(ContractId c) const { return map_.count(c) != 0; }
  std::uint32_t n_shards() const { return n_shards_; }
  std::size_t size() const { return map_.size(); }
  const std::unordered_map<ContractId, ShardId>& map() const { return map_; }

 private:
  std::unordered_map<ContractId, ShardId> map_;
  std::uint32_t n_shards_ = 0;
};

/// Reads and writes of a trace at the requested granularity.
ReadWriteSet extract_rw_set(const std::vector<Step>& trace, Granularity granularity);

/// True if `later` may not follow `earlier` in one order under `rule`.
/// Throws on granularity mismatch between the two sets.
bool conflicts(const ReadWriteSet& earlier, const ReadWriteSet& later, DependencyRule rule);

/// Shards owning any contract the trace touches, including the entry contract.
std::set<ShardId> related_shards(const Transaction& txn, const Placement& placement);

bool intersects(const std::set<StorageKey>& a, const std::set<StorageKey>& b);

// Deterministic 64-bit mixing used for state values, digests and hashing.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

/// Value of a key before any transaction wrote it.
constexpr Value genesis_value(const StorageKey& k) {
  return mix(0x5eed0000ULL + k.contract, k.slot);
}

using TxnLookup = std::function<const Transaction&(TxnId)>;

}  // namespace prophet
