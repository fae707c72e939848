#include "prophet/shard_runtime.hpp"

#include <algorithm>

#include "prophet/sequencer.hpp"

namespace prophet {

TxnStatus ConfirmationTracker::status(InstanceId instance) const {
  auto it = entries_.find(instance);
  return it == entries_.end() ? TxnStatus::Pending : it->second.status;
}

std::vector<Resolution> ConfirmationTracker::on_proof(const Proof& proof) {
  std::vector<Resolution> out;
  if (!proof.attestation.honest) {
    ++rejected_proofs_;
    return out;
  }
  for (const auto& pe : proof.entries) {
    Entry& e = entries_[pe.instance];
    if (e.status != TxnStatus::Pending) continue;
    if (proof.order_proof) {
      e.order_ok = true;
    } else {
      if (e.needed.empty()) e.needed = pe.related_shards;
      if (std::find(e.got.begin(), e.got.end(), proof.shard_id) == e.got.end()) e.got.push_back(proof.shard_id);
    }
    for (InstanceId p : pe.predecessors) {
      if (p == pe.instance || std::find(e.preds.begin(), e.preds.end(), p) != e.preds.end()) continue;
      e.preds.push_back(p);
      Entry& pred = entries_[p];
      if (pred.status == TxnStatus::Pending) pred.waiters.push_back(pe.instance);
    }
    if (pe.verdict == Verdict::Invalid) {
      Entry& self = entries_[pe.instance];
      self.status = TxnStatus::Invalidated;
      out.push_back({pe.instance, TxnStatus::Invalidated, false});
      auto waiters = std::move(self.waiters);
      self.waiters.clear();
      for (InstanceId w : waiters) settle(w, out);
    } else {
      settle(pe.instance, out);
    }
  }
  return out;
}

void ConfirmationTracker::settle(InstanceId start, std::vector<Resolution>& out) {
  std::vector<InstanceId> work{start};
  while (!work.empty()) {
    const InstanceId id = work.back();
    work.pop_back();
    Entry& e = entries_[id];
    if (e.status != TxnStatus::Pending) continue;

    bool pred_invalid = false, preds_done = true;
    for (InstanceId p : e.preds) {
      const TxnStatus s = status(p);
      pred_invalid = pred_invalid || s == TxnStatus::Invalidated;
      preds_done = preds_done && s == TxnStatus::Confirmed;
    }
    Entry& cur = entries_[id];
    if (pred_invalid) {
      cur.status = TxnStatus::Invalidated;
      out.push_back({id, TxnStatus::Invalidated, true});
    } else {
      auto sorted_got = cur.got;
      auto sorted_needed = cur.needed;
      std::sort(sorted_got.begin(), sorted_got.end());
      std::sort(sorted_needed.begin(), sorted_needed.end());
      const bool all_proofs = cur.order_ok && !cur.needed.empty() && sorted_got == sorted_needed;
      if (!all_proofs || !preds_done) continue;
      cur.status = TxnStatus::Confirmed;
      out.push_back({id, TxnStatus::Confirmed, false});
    }
    auto waiters = std::move(cur.waiters);
    cur.waiters.clear();
    work.insert(work.end(), waiters.begin(), waiters.end());
  }
}

ShardRuntime::ShardRuntime(ShardId id, const Placement* placement, OrderingRule rule)
    : id_(id), placement_(placement), rule_(rule), next_round_(1) {
  if (!placement_) throw Error("shard runtime needs a placement");
}

BlockExecution ShardRuntime::execute_block(const Block& block, const TxnLookup& lookup) {
  if (block.shard_id != id_) throw Error("block for shard " + std::to_string(block.shard_id) + " sent to shard " +
                                         std::to_string(id_));
  if (block.round != next_round_) {
    throw Error("shard " + std::to_string(id_) + " expected round " + std::to_string(next_round_) + ", got " +
                std::to_string(block.round));
  }
  ++next_round_;

  BlockExecution out;
  out.proof.shard_id = id_;
  out.proof.round = block.round;
  const auto violations = admission_violations(block.txns, rule_);
  const StateReader live = [this](const StorageKey& k) { return store_.read_latest(k); };

  for (std::size_t i = 0; i < block.txns.size(); ++i) {
    const OrderEntry& entry = block.txns[i];
    const TransactionProfile& profile = entry.profile;
    const Transaction& txn = lookup(profile.txn_id);

    ProofEntry pe;
    pe.instance = entry.instance;
    pe.position = entry.position;
    const auto shards = related_shards(txn, *placement_);
    pe.related_shards.assign(shards.begin(), shards.end());

    if (violations[i]) {
      pe.verdict = Verdict::Invalid;
      pe.cause = InvalidCause::OrderViolation;
      out.proof.entries.push_back(std::move(pe));
      continue;
    }

    const ShardExecution ex = execute_on_shard(txn, *placement_, id_, profile, live);
    out.compute_ms += ex.compute_ms;
    for (const StorageKey& k : ex.touched) {
      if (auto last = store_.latest(k); last && last->writer != entry.instance) {
        if (std::find(pe.predecessors.begin(), pe.predecessors.end(), last->writer) == pe.predecessors.end()) {
          pe.predecessors.push_back(last->writer);
        }
      }
    }

    if (ex.matches) {
      for (const auto& [key, value] : ex.writes) {
        store_.write(key, WriteRecord{block.round, entry.position, entry.instance, value});
      }
      ++out.applied;
    } else {
      pe.verdict = Verdict::Invalid;
      // A profile that reproduces itself from its own read values was honest
      // for some snapshot; the state has simply moved since.
      const StateReader claimed = [&](const StorageKey& k) {
        auto it = profile.read_values.find(k);
        return it != profile.read_values.end() ? it->second : store_.read_latest(k);
      };
      const bool self_consistent = execute_on_shard(txn, *placement_, id_, profile, claimed).matches;
      pe.cause = self_consistent ? InvalidCause::Stale : InvalidCause::ProfileFault;
    }
    out.proof.entries.push_back(std::move(pe));
  }
  return out;
}

std::vector<Resolution> ShardRuntime::receive_proof(const Proof& proof) {
  auto resolutions = tracker_.on_proof(proof);
  for (const auto& r : resolutions) {
    if (r.status == TxnStatus::Invalidated) store_.rollback(r.instance);
  }
  return resolutions;
}

std::map<StorageKey, Value> ShardRuntime::confirmed_state() const {
  return store_.materialize([this](InstanceId w) { return tracker_.status(w) == TxnStatus::Confirmed; });
}

}  // namespace prophet
