#include "prophet/execution.hpp"

#include <bit>

namespace prophet {

namespace {

std::uint64_t key_bits(const StorageKey& k) { return (std::uint64_t{k.contract} << 32) | k.slot; }

template <class Map>
Map restrict_to_shard(const Map& m, const Placement& placement, ShardId shard) {
  Map out;
  for (const auto& [k, v] : m) {
    if (placement.contains(k.contract) && placement.shard_of(k.contract) == shard) out.emplace(k, v);
  }
  return out;
}

std::set<StorageKey> restrict_keys(const std::set<StorageKey>& keys, const Placement& placement, ShardId shard) {
  std::set<StorageKey> out;
  for (const auto& k : keys) {
    if (placement.contains(k.contract) && placement.shard_of(k.contract) == shard) out.insert(k);
  }
  return out;
}

bool same_skeleton(const CrossShardMessage& a, const CrossShardMessage& b) {
  return a.seq == b.seq && a.from_contract == b.from_contract && a.to_contract == b.to_contract &&
         a.payload_bytes == b.payload_bytes && a.return_bytes == b.return_bytes;
}

}  // namespace

SegmentPlan plan_segments(const Transaction& txn, const Placement& placement) {
  SegmentPlan plan;
  ContractId ctx = txn.entry_contract();
  ShardId cur = placement.shard_of(ctx);
  Segment open{0, 0, cur, -1, -1};

  auto cross = [&](std::size_t close_at, ContractId to, std::uint32_t payload, std::uint32_t ret) {
    const int idx = static_cast<int>(plan.messages.size());
    open.end = close_at;
    open.outbound = idx;
    plan.segments.push_back(open);
    CrossShardMessage msg;
    msg.seq = static_cast<std::uint32_t>(idx);
    msg.from_contract = ctx;
    msg.to_contract = to;
    msg.payload_bytes = payload;
    msg.return_bytes = ret;
    plan.messages.push_back(msg);
    cur = placement.shard_of(to);
    open = Segment{close_at, close_at, cur, idx, -1};
  };

  for (std::size_t i = 0; i < txn.trace.size(); ++i) {
    const Step& step = txn.trace[i];
    if (auto* call = std::get_if<CallStep>(&step)) {
      if (placement.shard_of(call->target) != cur) cross(i + 1, call->target, call->payload_bytes, call->return_bytes);
      ctx = call->target;
      continue;
    }
    const StorageKey* key = nullptr;
    if (auto* r = std::get_if<ReadStep>(&step)) key = &r->key;
    if (auto* w = std::get_if<WriteStep>(&step)) key = &w->key;
    if (key && key->contract != ctx) {
      if (placement.shard_of(key->contract) != cur) cross(i, key->contract, 0, 0);
      ctx = key->contract;
    }
  }
  open.end = txn.trace.size();
  plan.segments.push_back(open);
  return plan;
}

Value initial_digest(TxnId txn) { return mix(0x7a3c0ffeeULL, txn); }

Value run_segment(const Transaction& txn, const Segment& seg, Value digest, const StateReader& reader,
                  ExecutionScratch& scratch) {
  for (std::size_t i = seg.begin; i < seg.end; ++i) {
    const Step& step = txn.trace[i];
    if (auto* r = std::get_if<ReadStep>(&step)) {
      Value v;
      if (auto it = scratch.writes.find(r->key); it != scratch.writes.end()) {
        v = it->second;
      } else if (auto it2 = scratch.reads.find(r->key); it2 != scratch.reads.end()) {
        v = it2->second;
      } else {
        v = reader(r->key);
        scratch.reads.emplace(r->key, v);
      }
      digest = mix(mix(digest, key_bits(r->key)), v);
    } else if (auto* w = std::get_if<WriteStep>(&step)) {
      const Value v = mix(digest, i);
      scratch.writes[w->key] = v;
      digest = mix(mix(digest, key_bits(w->key)), v);
    } else if (auto* c = std::get_if<ComputeStep>(&step)) {
      digest = mix(digest, i ^ std::bit_cast<std::uint64_t>(c->cost_ms));
    } else if (auto* call = std::get_if<CallStep>(&step)) {
      digest = mix(digest, (std::uint64_t{call->target} << 32) ^ call->payload_bytes ^ (std::uint64_t{call->return_bytes} << 16));
    }
  }
  return digest;
}

namespace {
double segment_compute(const Transaction& txn, const Segment& seg) {
  double total = 0.0;
  for (std::size_t i = seg.begin; i < seg.end; ++i) {
    if (auto* c = std::get_if<ComputeStep>(&txn.trace[i])) total += c->cost_ms;
  }
  return total;
}
}  // namespace

ExecutionRecord execute(const Transaction& txn, const Placement& placement, const StateReader& reader) {
  SegmentPlan plan = plan_segments(txn, placement);
  ExecutionScratch scratch;
  ExecutionRecord rec;
  Value digest = initial_digest(txn.id);
  for (const Segment& seg : plan.segments) {
    if (seg.inbound >= 0) plan.messages[seg.inbound].param_value = digest;
    digest = run_segment(txn, seg, digest, reader, scratch);
    if (seg.inbound >= 0) plan.messages[seg.inbound].return_value = digest;
    rec.compute_ms += segment_compute(txn, seg);
  }
  rec.reads = std::move(scratch.reads);
  rec.writes = std::move(scratch.writes);
  rec.messages = std::move(plan.messages);
  rec.result = digest;
  return rec;
}

TransactionProfile make_profile(const Transaction& txn, const ExecutionRecord& rec, Granularity granularity,
                                Round base_round, std::uint32_t coalition_id, std::uint32_t attempt) {
  TransactionProfile p;
  p.txn_id = txn.id;
  p.attempt = attempt;
  p.rw_set = extract_rw_set(txn.trace, granularity);
  p.messages = rec.messages;
  p.read_values = rec.reads;
  p.write_values = rec.writes;
  p.base_round = base_round;
  p.coalition_id = coalition_id;
  return p;
}

ShardExecution execute_on_shard(const Transaction& txn, const Placement& placement, ShardId shard,
                                const TransactionProfile& profile, const StateReader& reader) {
  ShardExecution out;
  const SegmentPlan plan = plan_segments(txn, placement);

  bool structure_ok = profile.messages.size() == plan.messages.size();
  for (std::size_t i = 0; structure_ok && i < plan.messages.size(); ++i) {
    structure_ok = same_skeleton(plan.messages[i], profile.messages[i]);
  }
  const ReadWriteSet actual_rw = extract_rw_set(txn.trace, profile.rw_set.granularity);
  if (restrict_keys(actual_rw.reads, placement, shard) != restrict_keys(profile.rw_set.reads, placement, shard) ||
      restrict_keys(actual_rw.writes, placement, shard) != restrict_keys(profile.rw_set.writes, placement, shard)) {
    structure_ok = false;
  }

  const auto msg_or_zero = [&](int idx, bool want_return) -> Value {
    if (idx < 0 || static_cast<std::size_t>(idx) >= profile.messages.size()) return 0;
    return want_return ? profile.messages[idx].return_value : profile.messages[idx].param_value;
  };

  ExecutionScratch scratch;
  bool digests_ok = true;
  for (const Segment& seg : plan.segments) {
    if (seg.shard != shard) continue;
    Value digest = seg.inbound < 0 ? initial_digest(txn.id) : msg_or_zero(seg.inbound, false);
    digest = run_segment(txn, seg, digest, reader, scratch);
    if (seg.outbound >= 0 && digest != msg_or_zero(seg.outbound, false)) digests_ok = false;
    if (seg.inbound >= 0 && digest != msg_or_zero(seg.inbound, true)) digests_ok = false;
    out.compute_ms += segment_compute(txn, seg);
  }

  out.reads = std::move(scratch.reads);
  out.writes = std::move(scratch.writes);
  out.reads_match = out.reads == restrict_to_shard(profile.read_values, placement, shard);
  const bool writes_match = out.writes == restrict_to_shard(profile.write_values, placement, shard);
  out.structure_ok = structure_ok;
  out.matches = structure_ok && digests_ok && out.reads_match && writes_match;

  const ReadWriteSet state_rw = extract_rw_set(txn.trace, Granularity::StateLevel);
  std::set<StorageKey> touched = restrict_keys(state_rw.reads, placement, shard);
  for (const auto& k : restrict_keys(state_rw.writes, placement, shard)) touched.insert(k);
  out.touched.assign(touched.begin(), touched.end());
  return out;
}

}  // namespace prophet
