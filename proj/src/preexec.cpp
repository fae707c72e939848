#include "prophet/preexec.hpp"

#include <algorithm>
#include <functional>

namespace prophet {

TxnCost txn_cost(const Transaction& txn, const Placement& placement, const TimingParams& timing) {
  TxnCost cost;
  for (const auto& step : txn.trace) {
    if (auto* c = std::get_if<ComputeStep>(&step)) cost.compute_ms += c->cost_ms;
  }
  for (const auto& m : plan_segments(txn, placement).messages) {
    cost.comm_ms += transfer_time(m.payload_bytes, timing.latency_ms, timing.bandwidth_mbps) +
                    transfer_time(m.return_bytes, timing.latency_ms, timing.bandwidth_mbps);
  }
  return cost;
}

double simulate_timing(const CooperationMode& mode, std::span<const TxnCost> costs) {
  switch (mode.kind) {
    case CoopKind::Sequential: {
      double total = 0.0;
      for (const auto& c : costs) total += c.compute_ms + c.comm_ms;
      return total;
    }
    case CoopKind::Overlap: {
      double cpu_free = 0.0, link_free = 0.0;
      for (const auto& c : costs) {
        cpu_free += c.compute_ms;
        link_free = std::max(cpu_free, link_free) + c.comm_ms;
      }
      return std::max(cpu_free, link_free);
    }
    case CoopKind::Parallel: {
      if (mode.lanes == 0) throw Error("parallel cooperation needs at least one lane");
      std::vector<double> lanes(mode.lanes, 0.0);
      for (const auto& c : costs) {
        auto lane = std::min_element(lanes.begin(), lanes.end());
        *lane += c.compute_ms + c.comm_ms;
      }
      return *std::max_element(lanes.begin(), lanes.end());
    }
  }
  return 0.0;
}

bool corrupt_profile(TransactionProfile& profile, const Transaction& txn, ShardId shard, const Placement& placement,
                     Rng& rng) {
  (void)txn;
  std::vector<std::function<void()>> options;
  auto on_shard = [&](ContractId c) { return placement.contains(c) && placement.shard_of(c) == shard; };

  auto& rw = profile.rw_set;
  auto add_key_options = [&](std::set<StorageKey>& set, std::set<StorageKey>& other) {
    for (const StorageKey& key : set) {
      if (!on_shard(key.contract)) continue;
      if (rw.granularity == Granularity::StateLevel) {
        options.emplace_back([&set, key, &rng] {
          StorageKey moved = key;
          moved.slot = static_cast<std::uint32_t>((key.slot + 1 + rng.below(255)) % 256);
          if (moved.slot == key.slot) moved.slot = key.slot + 1;
          set.erase(key);
          set.insert(moved);
        });
      } else {
        options.emplace_back([&set, &other, key] {
          set.erase(key);
          other.insert(key);
        });
      }
    }
  };
  add_key_options(rw.reads, rw.writes);
  add_key_options(rw.writes, rw.reads);
  for (auto& msg : profile.messages) {
    if (on_shard(msg.to_contract)) {
      options.emplace_back([&msg, &rng] { msg.return_value ^= (rng.bits() | 1); });
    }
  }
  if (options.empty()) return false;
  options[rng.below(options.size())]();
  return true;
}

PreExecBatch pre_execute(const Coalition& coalition, std::span<const PreExecRequest> requests,
                         const StateReader& snapshot, Round base_round, const PreExecContext& ctx) {
  if (!ctx.placement || !ctx.assignment) throw Error("pre-execution context is incomplete");
  PreExecBatch batch;
  std::vector<TxnCost> costs;
  for (const auto& req : requests) {
    const Transaction& txn = *req.txn;
    if (!coalition.range.contains(routing_hash(txn.id, req.attempt))) {
      throw Error("transaction " + std::to_string(txn.id) + " is outside the coalition's hash range");
    }
    const auto shards = related_shards(txn, *ctx.placement);
    const bool covered =
        std::all_of(shards.begin(), shards.end(), [&](ShardId s) { return coalition.members.count(s) != 0; });
    if (!covered) {
      batch.skipped.push_back(txn.id);
      continue;
    }

    PreExecResult result;
    const ExecutionRecord rec = execute(txn, *ctx.placement, snapshot);
    result.profile = make_profile(txn, rec, ctx.granularity, base_round, coalition.id, req.attempt);

    std::vector<ShardId> malicious;
    for (ShardId s : shards) {
      if (ctx.assignment->malicious[coalition.members.at(s)]) malicious.push_back(s);
    }
    if (!malicious.empty()) {
      Rng rng(mix(ctx.seed ^ 0x636f7272ULL, make_instance(txn.id, req.attempt)));
      for (std::size_t i = malicious.size(); i > 1; --i) std::swap(malicious[i - 1], malicious[rng.below(i)]);
      for (ShardId s : malicious) {
        if (corrupt_profile(result.profile, txn, s, *ctx.placement, rng)) {
          result.corrupted = true;
          break;
        }
      }
    }

    const TxnCost cost = txn_cost(txn, *ctx.placement, ctx.timing);
    result.makespan_contribution = cost.compute_ms + cost.comm_ms;
    costs.push_back(cost);
    batch.results.push_back(std::move(result));
  }
  batch.makespan_ms = simulate_timing(coalition.mode, costs);
  return batch;
}

CoalitionRegistry CoalitionRegistry::round_robin(const NodeAssignment& assignment, std::uint32_t n_coalitions,
                                                 CooperationMode mode) {
  if (n_coalitions == 0) throw Error("need at least one coalition");
  CoalitionRegistry reg;
  for (std::uint32_t j = 0; j < n_coalitions; ++j) {
    Coalition c;
    c.id = j;
    c.mode = mode;
    for (ShardId s = 0; s < assignment.members.size(); ++s) {
      const auto& nodes = assignment.members[s];
      if (!nodes.empty()) c.members[s] = nodes[j % nodes.size()];
    }
    reg.coalitions_.push_back(std::move(c));
  }
  reg.assign_ranges();
  return reg;
}

void CoalitionRegistry::assign_ranges() {
  const auto n = static_cast<unsigned __int128>(coalitions_.size());
  const unsigned __int128 space = static_cast<unsigned __int128>(1) << 64;
  for (std::size_t i = 0; i < coalitions_.size(); ++i) {
    auto& r = coalitions_[i].range;
    r.lo = static_cast<std::uint64_t>(space * i / n);
    r.to_end = i + 1 == coalitions_.size();
    r.hi = r.to_end ? 0 : static_cast<std::uint64_t>(space * (i + 1) / n);
  }
}

const Coalition& CoalitionRegistry::coalition_for(TxnId txn, std::uint32_t attempt) const {
  const std::uint64_t h = routing_hash(txn, attempt);
  for (const auto& c : coalitions_) {
    if (c.range.contains(h)) return c;
  }
  throw Error("no coalition covers the routing hash");
}

const std::set<NodeId>& CoalitionRegistry::blacklist(NodeId node) const {
  static const std::set<NodeId> empty;
  auto it = blacklists_.find(node);
  return it == blacklists_.end() ? empty : it->second;
}

void CoalitionRegistry::churn(const std::vector<InvalidFeedback>& feedback, const NodeAssignment& assignment,
                              Rng& rng) {
  for (const auto& fb : feedback) {
    auto it = std::find_if(coalitions_.begin(), coalitions_.end(),
                           [&](const Coalition& c) { return c.id == fb.coalition_id; });
    if (it == coalitions_.end()) continue;
    Coalition& coalition = *it;
    for (ShardId blamed_shard : fb.blamed_shards) {
      auto member_it = coalition.members.find(blamed_shard);
      if (member_it == coalition.members.end()) continue;
      const NodeId blamed = member_it->second;

      std::vector<NodeId> honest;
      for (const auto& [s, node] : coalition.members) {
        if (node != blamed && !assignment.malicious[node]) honest.push_back(node);
      }
      if (honest.empty()) continue;  // nobody left who would walk away

      std::set<NodeId> flagged;
      for (NodeId h : honest) {
        blacklists_[h].insert(blamed);
        flagged.insert(blacklists_[h].begin(), blacklists_[h].end());
      }
      std::vector<NodeId> candidates;
      for (NodeId node : assignment.members.at(blamed_shard)) {
        if (node != blamed && !flagged.count(node)) candidates.push_back(node);
      }
      if (candidates.empty()) continue;
      member_it->second = candidates[rng.below(candidates.size())];
    }
  }
}

std::vector<Coalition> coalition_churn(const CoalitionRegistry& registry, const std::vector<InvalidFeedback>& feedback,
                                       const NodeAssignment& assignment, Rng& rng) {
  CoalitionRegistry copy = registry;
  copy.churn(feedback, assignment, rng);
  return copy.coalitions();
}

}  // namespace prophet
