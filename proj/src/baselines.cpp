#include "prophet/baselines.hpp"

#include <algorithm>
#include <deque>
#include <optional>
#include <unordered_map>

#include "prophet/execution.hpp"
#include "prophet/versioned_store.hpp"

namespace prophet {
namespace {

enum class Ev : std::uint8_t { Issue, Arrive, RoundEnd, ClientStart, ClientReply };
enum class Item : std::uint8_t { Hop, LockReq, Release, Commit, Single };

struct Payload {
  Ev kind = Ev::Issue;
  ShardId shard = 0;
  std::size_t txn = 0;
  std::uint32_t attempt = 0;
  std::uint32_t aux = 0;
  Item item = Item::Hop;
};

struct QItem {
  Item kind = Item::Hop;
  std::size_t txn = 0;
  std::uint32_t attempt = 0;
  std::uint32_t aux = 0;
  SimTime arrival = 0.0;
};

struct ShardQueue {
  std::deque<QItem> items;
  bool active = false;
  SimTime round_start = 0.0;
};

struct Observed {
  InstanceId writer = 0;
  Round stamp = 0;
};

struct Lock {
  InstanceId exclusive = 0;
  std::vector<InstanceId> shared;
};

struct BaseTxn {
  std::uint32_t attempt = 0;  // retries so far
  bool committed = false;
  bool aborted = false;
  SimTime commit_time = 0.0;

  // OCC attempt state.
  Value digest = 0;
  ExecutionScratch scratch;
  std::map<StorageKey, std::optional<Observed>> observed;
  std::map<StorageKey, Round> first_write;
  std::set<ShardId> wrote_on;

  // 2PL attempt state.
  std::size_t replies = 0;
  std::vector<ShardId> granted;
  bool denied = false;
  std::size_t pending_commits = 0;
};

class Engine {
 public:
  Engine(const std::vector<Transaction>& txns, const Placement& placement, const SimConfig& config, Mechanism mech)
      : txns_(txns),
        placement_(placement),
        config_(config),
        mech_(mech),
        rng_(mix(config.seed, mech == Mechanism::OCC ? 0x6f6363ULL : 0x32706cULL)) {
    config.validate();
    if (placement.n_shards() != config.n_shards) throw Error("placement and config disagree on the shard count");
    stores_.resize(config.n_shards);
    queues_.resize(config.n_shards);
    locks_.resize(config.n_shards);
    held_.resize(config.n_shards);
    state_.resize(txns.size());
    for (const auto& t : txns) {
      plans_.push_back(plan_segments(t, placement));
      auto shards = related_shards(t, placement);
      related_.emplace_back(shards.begin(), shards.end());
      keys_.push_back(extract_rw_set(t.trace, Granularity::StateLevel));
    }
  }

  RunResult run() {
    result_.mechanism = mech_;
    SimTime last_issue = 0.0;
    for (std::size_t i = 0; i < txns_.size(); ++i) {
      queue_.schedule(txns_[i].issue_time, Payload{Ev::Issue, 0, i});
      last_issue = std::max(last_issue, txns_[i].issue_time);
    }
    const SimTime deadline = last_issue + config_.drain_limit_ms;
    while (auto ev = queue_.next()) {
      if (ev->fire_time > deadline) break;
      const Payload& p = ev->payload;
      log_.record(ev->fire_time, static_cast<std::uint64_t>(p.kind) | (static_cast<std::uint64_t>(p.item) << 8),
                  p.shard, (static_cast<std::uint64_t>(p.txn) << 20) ^ p.attempt);
      handle(ev->fire_time, p);
    }
    finalize();
    return std::move(result_);
  }

 private:
  InstanceId instance(std::size_t t) const { return make_instance(txns_[t].id, state_[t].attempt); }
  VersionedStore& store_of(const StorageKey& k) { return stores_[placement_.shard_of(k.contract)]; }

  double round_length(ShardId s) {
    double d = config_.consensus.draw(rng_);
    if (!config_.shard_slowdown.empty()) d *= config_.shard_slowdown[s];
    return d;
  }

  void send(ShardId s, QItem item, SimTime at) {
    queue_.schedule(at, Payload{Ev::Arrive, s, item.txn, item.attempt, item.aux, item.kind});
  }

  void enqueue(ShardId s, const Payload& p, SimTime now) {
    ShardQueue& q = queues_[s];
    q.items.push_back(QItem{p.item, p.txn, p.attempt, p.aux, now});
    if (!q.active) {
      q.active = true;
      q.round_start = now;
      queue_.schedule(now + round_length(s), Payload{Ev::RoundEnd, s});
    }
  }

  void handle(SimTime now, const Payload& p) {
    switch (p.kind) {
      case Ev::Issue:
        on_issue(p.txn, now);
        break;
      case Ev::Arrive:
        enqueue(p.shard, p, now);
        break;
      case Ev::RoundEnd:
        on_round_end(p.shard, now);
        break;
      case Ev::ClientStart:
        send_lock_requests(p.txn, now);
        break;
      case Ev::ClientReply:
        on_client_reply(p.txn, p.attempt, p.shard, p.aux != 0, now);
        break;
    }
  }

  void on_issue(std::size_t t, SimTime now) {
    if (mech_ == Mechanism::OCC) {
      start_occ(t);
      send(plans_[t].segments.front().shard, QItem{Item::Hop, t, 0, 0}, now);
    } else if (related_[t].size() == 1) {
      send(related_[t].front(), QItem{Item::Single, t, 0, 0}, now);
    } else {
      // The client pre-executes with one round trip per touched shard.
      const double delay = 2.0 * config_.link_latency_ms * static_cast<double>(related_[t].size());
      queue_.schedule(now + delay, Payload{Ev::ClientStart, 0, t});
    }
  }

  void on_round_end(ShardId s, SimTime now) {
    ShardQueue& q = queues_[s];
    std::deque<QItem> batch;
    batch.swap(q.items);
    std::deque<QItem> rest;
    std::size_t used = 0;
    for (QItem& item : batch) {
      const bool counted = item.kind == Item::Hop || item.kind == Item::LockReq || item.kind == Item::Single;
      if (item.arrival > q.round_start || (counted && used >= config_.block_capacity)) {
        rest.push_back(item);
        continue;
      }
      if (counted) ++used;
      if (!process(s, item, now)) {
        item.arrival = now;
        rest.push_back(item);
      }
    }
    // Items queued while processing arrived after the cut.
    for (auto& item : q.items) rest.push_back(item);
    q.items = std::move(rest);
    if (q.items.empty()) {
      q.active = false;
    } else {
      q.round_start = now;
      queue_.schedule(now + round_length(s), Payload{Ev::RoundEnd, s});
    }
  }

  /// Returns false to keep the item for the next round.
  bool process(ShardId s, const QItem& item, SimTime now) {
    switch (item.kind) {
      case Item::Hop:
        occ_hop(s, item, now);
        return true;
      case Item::LockReq:
        lock_request(s, item, now);
        return true;
      case Item::Release:
        release(s, make_instance(txns_[item.txn].id, item.attempt));
        return true;
      case Item::Commit:
        commit_apply(s, item, now);
        return true;
      case Item::Single:
        return single_shard(s, item, now);
    }
    return true;
  }

  // ---- OCC ----

  void start_occ(std::size_t t) {
    BaseTxn& st = state_[t];
    st.digest = initial_digest(txns_[t].id);
    st.scratch = {};
    st.observed.clear();
    st.first_write.clear();
    st.wrote_on.clear();
  }

  void occ_hop(ShardId s, const QItem& item, SimTime now) {
    BaseTxn& st = state_[item.txn];
    if (item.attempt != st.attempt || st.committed || st.aborted) return;
    const Transaction& txn = txns_[item.txn];
    const SegmentPlan& plan = plans_[item.txn];
    const Segment& seg = plan.segments[item.aux];
    const InstanceId inst = instance(item.txn);

    const StateReader reader = [&](const StorageKey& k) {
      VersionedStore& store = store_of(k);
      if (!st.observed.count(k)) {
        auto last = store.latest(k);
        st.observed[k] = last ? std::optional<Observed>(Observed{last->writer, last->round}) : std::nullopt;
      }
      return store.read_latest(k);
    };
    st.digest = run_segment(txn, seg, st.digest, reader, st.scratch);

    std::set<StorageKey> written;
    for (std::size_t i = seg.begin; i < seg.end; ++i) {
      if (auto* w = std::get_if<WriteStep>(&txn.trace[i])) written.insert(w->key);
    }
    for (const StorageKey& k : written) {
      const Round stamp = ++stamp_;
      store_of(k).write(k, WriteRecord{stamp, 0, inst, st.scratch.writes.at(k)});
      st.first_write.emplace(k, stamp);
      st.wrote_on.insert(placement_.shard_of(k.contract));
    }

    if (item.aux + 1 < plan.segments.size()) {
      const Segment& next = plan.segments[item.aux + 1];
      const double bytes = seg.outbound >= 0 ? plan.messages[static_cast<std::size_t>(seg.outbound)].payload_bytes : 0;
      send(next.shard, QItem{Item::Hop, item.txn, item.attempt, item.aux + 1}, now + transfer_time(bytes, config_));
      return;
    }
    (void)s;
    if (occ_validate(item.txn, inst)) {
      commit(item.txn, now, now);
    } else {
      for (ShardId w : st.wrote_on) stores_[w].rollback(inst);
      if (retry(item.txn)) {
        start_occ(item.txn);
        send(plan.segments.front().shard, QItem{Item::Hop, item.txn, st.attempt, 0}, now);
      }
    }
  }

  bool occ_validate(std::size_t t, InstanceId inst) {
    const BaseTxn& st = state_[t];
    for (const auto& [k, obs] : st.observed) {
      const auto& recs = store_of(k).records(k);
      const WriteRecord* foreign = nullptr;
      for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
        if (it->writer != inst) {
          foreign = &*it;
          break;
        }
      }
      if (!obs) {
        if (foreign) return false;
        continue;
      }
      if (!foreign || foreign->writer != obs->writer || foreign->round != obs->stamp) return false;
      if (!committed_.count(obs->writer)) return false;
    }
    for (const auto& [k, stamp] : st.first_write) {
      for (const auto& rec : store_of(k).records(k)) {
        if (rec.writer != inst && rec.round > stamp) return false;
      }
    }
    return true;
  }

  // ---- 2PL ----

  void send_lock_requests(std::size_t t, SimTime now) {
    BaseTxn& st = state_[t];
    st.replies = 0;
    st.granted.clear();
    st.denied = false;
    const double bytes = 64.0 + 8.0 * static_cast<double>(keys_[t].reads.size() + keys_[t].writes.size());
    for (ShardId s : related_[t]) {
      send(s, QItem{Item::LockReq, t, st.attempt, 0}, now + transfer_time(bytes, config_));
    }
  }

  bool lockable(ShardId s, std::size_t t, InstanceId inst) const {
    const auto& table = locks_[s];
    auto check = [&](const StorageKey& k, bool write) {
      auto it = table.find(k);
      if (it == table.end()) return true;
      const Lock& l = it->second;
      if (l.exclusive != 0 && l.exclusive != inst) return false;
      if (write) {
        return std::all_of(l.shared.begin(), l.shared.end(), [&](InstanceId h) { return h == inst; });
      }
      return true;
    };
    for (const auto& k : keys_[t].reads) {
      if (placement_.shard_of(k.contract) == s && !check(k, keys_[t].writes.count(k) != 0)) return false;
    }
    for (const auto& k : keys_[t].writes) {
      if (placement_.shard_of(k.contract) == s && !check(k, true)) return false;
    }
    return true;
  }

  void acquire(ShardId s, std::size_t t, InstanceId inst) {
    auto& table = locks_[s];
    auto& held = held_[s][inst];
    for (const auto& k : keys_[t].writes) {
      if (placement_.shard_of(k.contract) != s) continue;
      table[k].exclusive = inst;
      held.push_back(k);
    }
    for (const auto& k : keys_[t].reads) {
      if (placement_.shard_of(k.contract) != s || keys_[t].writes.count(k)) continue;
      table[k].shared.push_back(inst);
      held.push_back(k);
    }
  }

  void release(ShardId s, InstanceId inst) {
    auto it = held_[s].find(inst);
    if (it == held_[s].end()) return;
    auto& table = locks_[s];
    for (const auto& k : it->second) {
      auto lit = table.find(k);
      if (lit == table.end()) continue;
      Lock& l = lit->second;
      if (l.exclusive == inst) l.exclusive = 0;
      l.shared.erase(std::remove(l.shared.begin(), l.shared.end(), inst), l.shared.end());
      if (l.exclusive == 0 && l.shared.empty()) table.erase(lit);
    }
    held_[s].erase(it);
  }

  void lock_request(ShardId s, const QItem& item, SimTime now) {
    const InstanceId inst = make_instance(txns_[item.txn].id, item.attempt);
    const bool ok = lockable(s, item.txn, inst);
    if (ok) acquire(s, item.txn, inst);
    queue_.schedule(now + transfer_time(64.0, config_),
                    Payload{Ev::ClientReply, s, item.txn, item.attempt, ok ? 1u : 0u});
  }

  void on_client_reply(std::size_t t, std::uint32_t attempt, ShardId s, bool granted, SimTime now) {
    BaseTxn& st = state_[t];
    const double hop = transfer_time(64.0, config_);
    if (attempt != st.attempt || st.aborted) {
      if (granted) send(s, QItem{Item::Release, t, attempt, 0}, now + hop);
      return;
    }
    ++st.replies;
    if (granted) {
      st.granted.push_back(s);
    } else {
      st.denied = true;
    }
    if (st.replies < related_[t].size()) return;

    if (st.denied) {
      for (ShardId g : st.granted) send(g, QItem{Item::Release, t, attempt, 0}, now + hop);
      if (retry(t)) send_lock_requests(t, now);
      return;
    }
    execute_and_apply(t);
    st.pending_commits = related_[t].size();
    history_slot(t, now);
    for (ShardId g : related_[t]) send(g, QItem{Item::Commit, t, attempt, 0}, now + hop);
  }

  void commit_apply(ShardId s, const QItem& item, SimTime now) {
    BaseTxn& st = state_[item.txn];
    release(s, make_instance(txns_[item.txn].id, item.attempt));
    if (--st.pending_commits == 0) {
      st.committed = true;
      st.commit_time = now;
      result_.history[history_index_.at(item.txn)].commit_time = now;
    }
  }

  bool single_shard(ShardId s, const QItem& item, SimTime now) {
    const InstanceId inst = make_instance(txns_[item.txn].id, item.attempt);
    if (!lockable(s, item.txn, inst)) return false;
    execute_and_apply(item.txn);
    commit(item.txn, now, now);
    return true;
  }

  void execute_and_apply(std::size_t t) {
    const InstanceId inst = instance(t);
    const StateReader reader = [&](const StorageKey& k) { return store_of(k).read_latest(k); };
    const ExecutionRecord rec = execute(txns_[t], placement_, reader);
    for (const auto& [k, v] : rec.writes) store_of(k).write(k, WriteRecord{++stamp_, 0, inst, v});
  }

  // ---- shared ----

  bool retry(std::size_t t) {
    BaseTxn& st = state_[t];
    ++result_.retries;
    if (st.attempt >= config_.max_retry) {
      st.aborted = true;
      return false;
    }
    ++st.attempt;
    return true;
  }

  void history_slot(std::size_t t, SimTime now) {
    history_index_[t] = result_.history.size();
    result_.history.push_back({txns_[t].id, state_[t].attempt, 0, ++commit_seq_, now});
    committed_.insert(instance(t));
  }

  void commit(std::size_t t, SimTime decided, SimTime now) {
    history_slot(t, decided);
    state_[t].committed = true;
    state_[t].commit_time = now;
  }

  void finalize() {
    result_.end_time = queue_.now();
    result_.event_digest = log_.digest();
    result_.event_count = log_.count();
    // Only fully committed transactions count; drop decided-but-unapplied 2PL commits.
    std::vector<CommittedTxn> history;
    for (const auto& [t, slot] : history_index_) {
      if (state_[t].committed) history.push_back(result_.history[slot]);
    }
    std::sort(history.begin(), history.end(),
              [](const CommittedTxn& a, const CommittedTxn& b) { return a.position < b.position; });
    result_.history = std::move(history);
    std::set<InstanceId> done;
    for (const auto& h : result_.history) done.insert(make_instance(h.txn_id, h.attempt));
    for (const auto& store : stores_) {
      for (const auto& [k, v] : store.materialize([&](InstanceId w) { return done.count(w) != 0; })) {
        result_.final_state[k] = v;
      }
    }
    result_.drained = true;
    for (std::size_t i = 0; i < txns_.size(); ++i) {
      const BaseTxn& st = state_[i];
      TxnOutcome o;
      o.txn_id = txns_[i].id;
      o.issue_time = txns_[i].issue_time;
      o.committed = st.committed;
      o.aborted = st.aborted;
      o.commit_time = st.commit_time;
      o.attempts = st.attempt + 1;
      o.call_count = txns_[i].call_count();
      result_.txns.push_back(o);
      if (!st.committed && !st.aborted) result_.drained = false;
      if (st.committed) {
        result_.log.push_back({0, 0, txns_[i].id, st.attempt, "confirmed", st.commit_time});
      } else if (st.aborted) {
        result_.log.push_back({0, 0, txns_[i].id, st.attempt, "aborted", 0.0});
      }
    }
  }

  const std::vector<Transaction>& txns_;
  const Placement& placement_;
  SimConfig config_;
  Mechanism mech_;
  Rng rng_;
  EventQueue<Payload> queue_;
  EventLog log_;

  std::vector<VersionedStore> stores_;
  std::vector<ShardQueue> queues_;
  std::vector<std::unordered_map<StorageKey, Lock, StorageKeyHash>> locks_;
  std::vector<std::unordered_map<InstanceId, std::vector<StorageKey>>> held_;
  std::vector<SegmentPlan> plans_;
  std::vector<std::vector<ShardId>> related_;
  std::vector<ReadWriteSet> keys_;
  std::vector<BaseTxn> state_;
  std::set<InstanceId> committed_;
  std::unordered_map<std::size_t, std::size_t> history_index_;
  Round stamp_ = 0;
  std::uint64_t commit_seq_ = 0;
  RunResult result_;
};

}  // namespace

RunResult run_occ(const std::vector<Transaction>& txns, const Placement& placement, const SimConfig& config) {
  return Engine(txns, placement, config, Mechanism::OCC).run();
}

RunResult run_2pl(const std::vector<Transaction>& txns, const Placement& placement, const SimConfig& config) {
  return Engine(txns, placement, config, Mechanism::TwoPL).run();
}

}  // namespace prophet
