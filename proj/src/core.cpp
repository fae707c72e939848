#include "prophet/core.hpp"

#include <algorithm>
#include <sstream>

namespace prophet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

StorageKey to_contract_key(const StorageKey& k) { return StorageKey{k.contract, kWholeContract}; }

}  // namespace

ContractId Transaction::entry_contract() const {
  for (const auto& step : trace) {
    if (auto* r = std::get_if<ReadStep>(&step)) return r->key.contract;
    if (auto* w = std::get_if<WriteStep>(&step)) return w->key.contract;
    if (auto* c = std::get_if<CallStep>(&step)) return c->target;
  }
  throw Error("transaction " + std::to_string(id) + " references no contract");
}

std::size_t Transaction::call_count() const {
  return static_cast<std::size_t>(
      std::count_if(trace.begin(), trace.end(), [](const Step& s) { return std::holds_alternative<CallStep>(s); }));
}

ReadWriteSet ReadWriteSet::project(Granularity target) const {
  if (target == granularity) return *this;
  if (granularity == Granularity::ContractLevel) {
    throw Error("cannot refine a contract-level read/write set to state level");
  }
  ReadWriteSet out;
  out.granularity = Granularity::ContractLevel;
  for (const auto& k : reads) out.reads.insert(to_contract_key(k));
  for (const auto& k : writes) out.writes.insert(to_contract_key(k));
  return out;
}

OrderingRule OrderingRule::parse(const std::string& text) {
  OrderingRule rule;
  std::string head = text;
  std::string tail;
  if (auto comma = text.find(','); comma != std::string::npos) {
    head = text.substr(0, comma);
    tail = text.substr(comma + 1);
  }
  if (head == "contract") {
    rule.granularity = Granularity::ContractLevel;
    rule.dependency = DependencyRule::Disjoint;
  } else if (head == "state") {
    rule.granularity = Granularity::StateLevel;
    rule.dependency = DependencyRule::Disjoint;
  } else if (head == "rwdep") {
    rule.granularity = Granularity::StateLevel;
    rule.dependency = DependencyRule::RWDependency;
  } else {
    throw Error("unknown ordering '" + text + "' (expected contract|state|rwdep[,reorder])");
  }
  if (!tail.empty()) {
    if (tail != "reorder") throw Error("unknown ordering modifier '" + tail + "'");
    if (rule.dependency != DependencyRule::RWDependency) throw Error("reorder requires the rwdep ordering");
    rule.reorder_enabled = true;
  }
  return rule;
}

std::string OrderingRule::to_string() const {
  std::string s;
  if (dependency == DependencyRule::RWDependency) {
    s = granularity == Granularity::StateLevel ? "rwdep" : "rwdep-contract";
  } else {
    s = granularity == Granularity::StateLevel ? "state" : "contract";
  }
  if (reorder_enabled) s += ",reorder";
  return s;
}

std::uint64_t TransactionProfile::cross_shard_bytes() const {
  std::uint64_t total = 0;
  for (const auto& m : messages) total += m.payload_bytes + m.return_bytes;
  return total;
}

std::uint64_t Proof::digest() const {
  std::uint64_t h = mix(shard_id, static_cast<std::uint64_t>(round));
  h = mix(h, order_proof ? 1 : 0);
  for (const auto& e : entries) {
    h = mix(h, e.instance);
    h = mix(h, e.verdict == Verdict::Valid ? 1 : 2);
    h = mix(h, static_cast<std::uint64_t>(e.cause));
    for (auto p : e.predecessors) h = mix(h, p);
  }
  return h;
}

std::size_t Proof::wire_bytes() const {
  // verdict bitmap plus a 32-byte digest and a small header
  return 16 + 32 + (entries.size() + 7) / 8;
}

Placement::Placement(std::unordered_map<ContractId, ShardId> map, std::uint32_t n_shards)
    : map_(std::move(map)), n_shards_(n_shards) {
  for (const auto& [c, s] : map_) {
    if (s >= n_shards_) throw Error("contract " + std::to_string(c) + " placed on nonexistent shard");
  }
}

ShardId Placement::shard_of(ContractId c) const {
  auto it = map_.find(c);
  if (it == map_.end()) throw Error("contract " + std::to_string(c) + " is not placed");
  return it->second;
}

ReadWriteSet extract_rw_set(const std::vector<Step>& trace, Granularity granularity) {
  ReadWriteSet out;
  out.granularity = granularity;
  auto norm = [&](const StorageKey& k) {
    return granularity == Granularity::ContractLevel ? to_contract_key(k) : k;
  };
  for (const auto& step : trace) {
    std::visit(overloaded{
                   [&](const ReadStep& r) { out.reads.insert(norm(r.key)); },
                   [&](const WriteStep& w) { out.writes.insert(norm(w.key)); },
                   [](const auto&) {},
               },
               step);
  }
  return out;
}

bool intersects(const std::set<StorageKey>& a, const std::set<StorageKey>& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      return true;
    }
  }
  return false;
}

bool conflicts(const ReadWriteSet& earlier, const ReadWriteSet& later, DependencyRule rule) {
  if (earlier.granularity != later.granularity) throw Error("read/write set granularity mismatch");
  if (rule == DependencyRule::Disjoint) {
    return intersects(earlier.reads, later.reads) || intersects(earlier.reads, later.writes) ||
           intersects(earlier.writes, later.reads) || intersects(earlier.writes, later.writes);
  }
  // read-after-write or write-after-write
  return intersects(earlier.writes, later.reads) || intersects(earlier.writes, later.writes);
}

std::set<ShardId> related_shards(const Transaction& txn, const Placement& placement) {
  std::set<ShardId> out;
  out.insert(placement.shard_of(txn.entry_contract()));
  for (const auto& step : txn.trace) {
    std::visit(overloaded{
                   [&](const ReadStep& r) { out.insert(placement.shard_of(r.key.contract)); },
                   [&](const WriteStep& w) { out.insert(placement.shard_of(w.key.contract)); },
                   [&](const CallStep& c) { out.insert(placement.shard_of(c.target)); },
                   [](const ComputeStep&) {},
               },
               step);
  }
  return out;
}

}  // namespace prophet
