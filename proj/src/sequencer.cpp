#include "prophet/sequencer.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace prophet {
namespace {

using KeySet = std::unordered_set<StorageKey, StorageKeyHash>;

struct Item {
  const Candidate* cand = nullptr;
  ReadWriteSet rw;
  std::vector<ShardId> shards;
};

enum class Outcome : char { Admitted, Rejected, Capacity };

bool hits(const std::set<StorageKey>& keys, const KeySet& set) {
  return std::any_of(keys.begin(), keys.end(), [&](const StorageKey& k) { return set.count(k) != 0; });
}

std::vector<Item> prepare(std::span<const Candidate> candidates, const OrderingRule& rule, const Placement* placement) {
  std::vector<Item> items;
  items.reserve(candidates.size());
  for (const auto& c : candidates) {
    Item it;
    it.cand = &c;
    if (c.profile.rw_set.granularity == Granularity::ContractLevel && rule.granularity == Granularity::StateLevel) {
      throw Error("profile of txn " + std::to_string(c.profile.txn_id) + " is contract-level but the rule is state-level");
    }
    it.rw = c.profile.rw_set.project(rule.granularity);
    if (placement) {
      if (!c.txn) throw Error("candidate without a transaction");
      auto shards = related_shards(*c.txn, *placement);
      it.shards.assign(shards.begin(), shards.end());
    }
    items.push_back(std::move(it));
  }
  return items;
}

std::vector<Outcome> scan(const std::vector<Item>& items, const std::vector<std::size_t>& order,
                          DependencyRule dependency, std::size_t block_capacity) {
  KeySet reads, writes;
  std::map<ShardId, std::size_t> load;
  std::vector<Outcome> out(items.size(), Outcome::Rejected);
  for (std::size_t idx : order) {
    const Item& it = items[idx];
    bool conflict = hits(it.rw.reads, writes) || hits(it.rw.writes, writes);
    if (dependency == DependencyRule::Disjoint) {
      conflict = conflict || hits(it.rw.reads, reads) || hits(it.rw.writes, reads);
    }
    if (conflict) continue;
    if (block_capacity > 0 &&
        std::any_of(it.shards.begin(), it.shards.end(), [&](ShardId s) { return load[s] >= block_capacity; })) {
      out[idx] = Outcome::Capacity;
      continue;
    }
    out[idx] = Outcome::Admitted;
    reads.insert(it.rw.reads.begin(), it.rw.reads.end());
    writes.insert(it.rw.writes.begin(), it.rw.writes.end());
    for (ShardId s : it.shards) ++load[s];
  }
  return out;
}

std::size_t admitted_count(const std::vector<Outcome>& out) {
  return static_cast<std::size_t>(std::count(out.begin(), out.end(), Outcome::Admitted));
}

std::vector<std::size_t> arrival_order(const std::vector<Item>& items, std::uint32_t max_deferral) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto starved = [&](std::size_t i) { return max_deferral > 0 && items[i].cand->deferrals >= max_deferral; };
  auto issue = [&](std::size_t i) { return items[i].cand->txn ? items[i].cand->txn->issue_time : 0.0; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (starved(a) != starved(b)) return starved(a);
    if (issue(a) != issue(b)) return issue(a) < issue(b);
    return items[a].cand->profile.txn_id < items[b].cand->profile.txn_id;
  });
  return order;
}

// Only a read-after-write link from `earlier` to `later`.
bool raw_only(const ReadWriteSet& earlier, const ReadWriteSet& later) {
  return intersects(earlier.writes, later.reads) && !intersects(earlier.writes, later.writes) &&
         !intersects(earlier.reads, later.writes);
}

std::vector<std::size_t> reorder_indices(const std::vector<Item>& items, std::vector<std::size_t> order,
                                         DependencyRule dependency, std::size_t block_capacity) {
  auto outcome = scan(items, order, dependency, block_capacity);
  std::size_t best = admitted_count(outcome);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t c = order[pos];
    if (outcome[c] != Outcome::Rejected) continue;
    // First earlier admitted transaction that c conflicts with.
    std::size_t target = order.size();
    for (std::size_t q = 0; q < pos; ++q) {
      const std::size_t e = order[q];
      if (outcome[e] == Outcome::Admitted && conflicts(items[e].rw, items[c].rw, dependency)) {
        target = q;
        break;
      }
    }
    if (target == order.size() || !raw_only(items[order[target]].rw, items[c].rw)) continue;
    std::vector<std::size_t> trial = order;
    trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(pos));
    trial.insert(trial.begin() + static_cast<std::ptrdiff_t>(target), c);
    auto trial_outcome = scan(items, trial, dependency, block_capacity);
    const std::size_t n = admitted_count(trial_outcome);
    if (n > best) {
      best = n;
      order = std::move(trial);
      outcome = std::move(trial_outcome);
    }
  }
  return order;
}

}  // namespace

OrderResult build_order(std::span<const Candidate> candidates, const OrderingRule& rule, Round round,
                        const AdmissionOptions& opts) {
  if (opts.block_capacity > 0 && !opts.placement) throw Error("block capacity needs a placement");
  const auto items = prepare(candidates, rule, opts.block_capacity > 0 ? opts.placement : nullptr);
  auto order = arrival_order(items, opts.max_deferral);
  if (rule.reorder_enabled) order = reorder_indices(items, std::move(order), rule.dependency, opts.block_capacity);
  const auto outcome = scan(items, order, rule.dependency, opts.block_capacity);

  OrderResult result;
  result.order.round = round;
  for (std::size_t idx : order) {
    const Candidate& c = *items[idx].cand;
    switch (outcome[idx]) {
      case Outcome::Admitted: {
        OrderEntry e;
        e.position = static_cast<std::uint32_t>(result.order.entries.size());
        e.instance = c.profile.instance();
        e.profile = c.profile;
        result.order.entries.push_back(std::move(e));
        break;
      }
      case Outcome::Rejected:
        result.rejected.push_back(c.profile.txn_id);
        break;
      case Outcome::Capacity:
        result.capacity_deferred.push_back(c.profile.txn_id);
        break;
    }
  }
  return result;
}

std::vector<Candidate> reorder(std::span<const Candidate> candidates, const OrderingRule& rule) {
  const auto items = prepare(candidates, rule, nullptr);
  auto order = arrival_order(items, 0);
  if (rule.reorder_enabled) order = reorder_indices(items, std::move(order), rule.dependency, 0);
  std::vector<Candidate> out;
  out.reserve(order.size());
  for (std::size_t idx : order) out.push_back(candidates[idx]);
  return out;
}

std::vector<bool> admission_violations(std::span<const OrderEntry> entries, const OrderingRule& rule) {
  KeySet reads, writes;
  std::vector<bool> flagged(entries.size(), false);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& g = entries[i].profile.rw_set.granularity;
    if (g == Granularity::ContractLevel && rule.granularity == Granularity::StateLevel) {
      flagged[i] = true;  // cannot be checked at the rule's granularity
      continue;
    }
    const ReadWriteSet rw = entries[i].profile.rw_set.project(rule.granularity);
    bool conflict = hits(rw.reads, writes) || hits(rw.writes, writes);
    if (rule.dependency == DependencyRule::Disjoint) conflict = conflict || hits(rw.reads, reads) || hits(rw.writes, reads);
    if (conflict) {
      flagged[i] = true;
      continue;
    }
    reads.insert(rw.reads.begin(), rw.reads.end());
    writes.insert(rw.writes.begin(), rw.writes.end());
  }
  return flagged;
}

std::map<ShardId, Block> split_per_shard(const GlobalOrder& order, const Placement& placement,
                                         const TxnLookup& lookup) {
  std::map<ShardId, Block> blocks;
  for (const auto& entry : order.entries) {
    for (ShardId s : related_shards(lookup(entry.profile.txn_id), placement)) {
      Block& b = blocks[s];
      b.shard_id = s;
      b.round = order.round;
      b.txns.push_back(entry);
    }
  }
  return blocks;
}

std::size_t block_wire_bytes(const Block& block) {
  std::size_t bytes = 64;  // header and attestation
  for (const auto& e : block.txns) {
    const auto& p = e.profile;
    bytes += 16 + 8 * (p.rw_set.reads.size() + p.rw_set.writes.size()) + 8 * (p.read_values.size() + p.write_values.size()) +
             24 * p.messages.size() + p.cross_shard_bytes();
  }
  return bytes;
}

std::vector<DispatchEvent> propose(const GlobalOrder& order, const std::map<ShardId, Block>& blocks,
                                   DispatchMode mode, SimTime now, double seq_consensus_ms, const SimConfig& config) {
  std::vector<DispatchEvent> out;
  if (order.entries.empty()) return out;
  const SimTime send = mode == DispatchMode::Pipelined ? now : now + seq_consensus_ms;
  for (const auto& [shard, block] : blocks) {
    DispatchEvent ev;
    ev.shard = shard;
    ev.send_time = send;
    ev.bytes = block_wire_bytes(block);
    ev.arrival_time = send + transfer_time(static_cast<double>(ev.bytes), config);
    out.push_back(ev);
  }
  return out;
}

}  // namespace prophet
