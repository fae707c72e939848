#include "prophet/prophet_sim.hpp"

#include <algorithm>
#include <unordered_map>

#include "prophet/preexec.hpp"
#include "prophet/sequencer.hpp"
#include "prophet/shard_runtime.hpp"

namespace prophet {
namespace {

enum class Ev : std::uint8_t { PreExec, Trigger, BlockArrive, ExecDone, ProofReady, ProofArrive };

struct Payload {
  Ev kind = Ev::PreExec;
  ShardId shard = 0;
  Round round = 0;
  std::size_t index = 0;
};

enum class Phase { Waiting, Pool, Ready, Sequenced, Done };

struct TxnState {
  Phase phase = Phase::Waiting;
  std::uint32_t attempt = 0;
  std::uint32_t deferrals = 0;
  std::uint32_t sequenced = 0;
  TransactionProfile profile;
  bool committed = false;
  SimTime commit_time = 0.0;
};

struct InstanceInfo {
  std::size_t txn = 0;
  Round round = 0;
  std::uint32_t position = 0;
  bool sequenced = false;
  bool corrupted = false;
  std::uint32_t coalition = 0;
  std::map<ShardId, NodeId> members;
  std::uint32_t views_confirmed = 0;
  std::uint32_t views_invalidated = 0;
  bool direct_invalid = false;
};

class Sim {
 public:
  Sim(const std::vector<Transaction>& txns, const Placement& placement, const SimConfig& config, ProphetTrace* trace)
      : txns_(txns),
        placement_(placement),
        config_(config),
        trace_(trace),
        assignment_(assign_nodes(config)),
        registry_(CoalitionRegistry::round_robin(assignment_, config.coalition_count(), config.coop_mode)),
        consensus_rng_(mix(config.seed, 0x636f6e73ULL)),
        churn_rng_(mix(config.seed, 0x636875726eULL)) {
    if (placement.n_shards() != config.n_shards) throw Error("placement and config disagree on the shard count");
    for (ShardId s = 0; s < config.n_shards; ++s) shards_.emplace_back(s, &placement_, config.ordering);
    state_.resize(txns.size());
    for (std::size_t i = 0; i < txns.size(); ++i) {
      if (!index_.emplace(txns[i].id, i).second) throw Error("duplicate transaction id " + std::to_string(txns[i].id));
    }
    arrival_.resize(txns.size());
    for (std::size_t i = 0; i < txns.size(); ++i) arrival_[i] = i;
    std::stable_sort(arrival_.begin(), arrival_.end(), [&](std::size_t a, std::size_t b) { return before(a, b); });
    arrived_.resize(config.n_shards);
    busy_.assign(config.n_shards, false);
    if (trace_) trace_->exec_done.assign(config.n_shards, {});

    ctx_.placement = &placement_;
    ctx_.assignment = &assignment_;
    ctx_.granularity = Granularity::StateLevel;
    ctx_.timing = TimingParams{config.coalition_latency_ms, config.link_bandwidth_mbps};
    ctx_.seed = mix(config.seed, 0x707265ULL);
    lookup_ = [this](TxnId id) -> const Transaction& { return txns_[index_.at(id)]; };
  }

  RunResult run() {
    result_.mechanism = Mechanism::Prophet;
    if (!txns_.empty()) {
      schedule(txns_[arrival_.front()].issue_time, {Ev::PreExec});
      preexec_pending_ = true;
      const SimTime deadline = txns_[arrival_.back()].issue_time + config_.drain_limit_ms;
      while (auto ev = queue_.next()) {
        if (ev->fire_time > deadline) break;
        const Payload& p = ev->payload;
        log_.record(ev->fire_time, static_cast<std::uint64_t>(p.kind), p.shard,
                    (static_cast<std::uint64_t>(p.round) << 24) ^ p.index);
        handle(ev->fire_time, p);
      }
    }
    finalize();
    return std::move(result_);
  }

 private:
  bool before(std::size_t a, std::size_t b) const {
    if (txns_[a].issue_time != txns_[b].issue_time) return txns_[a].issue_time < txns_[b].issue_time;
    return txns_[a].id < txns_[b].id;
  }

  void schedule(SimTime t, Payload p) { queue_.schedule(t, p); }

  void schedule_preexec(SimTime now) {
    if (preexec_pending_) return;
    preexec_pending_ = true;
    schedule(now, {Ev::PreExec});
  }

  void handle(SimTime now, const Payload& p) {
    switch (p.kind) {
      case Ev::PreExec:
        on_preexec(now);
        break;
      case Ev::Trigger:
        on_trigger(now);
        break;
      case Ev::BlockArrive:
        arrived_[p.shard][p.round] = std::move(staged_[p.round][p.shard]);
        staged_[p.round].erase(p.shard);
        if (staged_[p.round].empty()) staged_.erase(p.round);
        try_execute(p.shard, now);
        break;
      case Ev::ExecDone:
        on_exec_done(p.shard, p.round, now);
        break;
      case Ev::ProofReady:
        on_proof_ready(p.index, now);
        break;
      case Ev::ProofArrive:
        on_proof_arrive(p.shard, p.index, now);
        break;
    }
  }

  StateReader snapshot() const {
    return [this](const StorageKey& k) { return shards_[placement_.shard_of(k.contract)].store().read_latest(k); };
  }

  void on_preexec(SimTime now) {
    preexec_pending_ = false;
    while (cursor_ < arrival_.size() && txns_[arrival_[cursor_]].issue_time <= now) {
      state_[arrival_[cursor_]].phase = Phase::Pool;
      pool_.push_back(arrival_[cursor_]);
      ++cursor_;
    }
    if (pool_.empty()) {
      if (cursor_ < arrival_.size()) {
        preexec_pending_ = true;
        schedule(txns_[arrival_[cursor_]].issue_time, {Ev::PreExec});
      } else {
        idle_ = true;
      }
      return;
    }
    std::sort(pool_.begin(), pool_.end(), [&](std::size_t a, std::size_t b) { return before(a, b); });

    std::map<std::uint32_t, std::vector<PreExecRequest>> groups;
    std::vector<std::size_t> leftover;
    for (std::size_t idx : pool_) {
      const Coalition& c = registry_.coalition_for(txns_[idx].id, state_[idx].attempt);
      auto& g = groups[c.id];
      if (g.size() < config_.coalition_batch) {
        g.push_back({&txns_[idx], state_[idx].attempt});
      } else {
        leftover.push_back(idx);
      }
    }

    const StateReader reader = snapshot();
    double makespan = 0.0;
    for (const auto& [cid, requests] : groups) {
      const Coalition& coalition = registry_.coalitions().at(cid);
      PreExecBatch batch = pre_execute(coalition, requests, reader, round_, ctx_);
      for (TxnId id : batch.skipped) leftover.push_back(index_.at(id));
      for (auto& r : batch.results) {
        const std::size_t idx = index_.at(r.profile.txn_id);
        InstanceInfo& info = instances_[r.profile.instance()];
        info.txn = idx;
        info.corrupted = r.corrupted;
        info.coalition = coalition.id;
        info.members = coalition.members;
        state_[idx].profile = std::move(r.profile);
        state_[idx].phase = Phase::Ready;
        ready_.push_back(idx);
      }
      makespan = std::max(makespan, batch.makespan_ms);
    }
    pool_ = std::move(leftover);
    schedule(now + makespan, {Ev::Trigger});
  }

  void on_trigger(SimTime now) {
    if (ready_.empty()) {
      schedule_preexec(now);
      return;
    }
    auto starved = [&](std::size_t i) { return state_[i].deferrals >= config_.max_deferral; };
    std::sort(ready_.begin(), ready_.end(), [&](std::size_t a, std::size_t b) {
      if (starved(a) != starved(b)) return starved(a);
      return before(a, b);
    });
    if (ready_.size() > config_.sequence_threshold) {
      for (std::size_t i = config_.sequence_threshold; i < ready_.size(); ++i) {
        state_[ready_[i]].phase = Phase::Pool;
        pool_.push_back(ready_[i]);
      }
      ready_.resize(config_.sequence_threshold);
    }

    std::vector<Candidate> cands;
    cands.reserve(ready_.size());
    for (std::size_t idx : ready_) cands.push_back({&txns_[idx], state_[idx].profile, state_[idx].deferrals});
    const Round r = ++round_;
    OrderResult res = build_order(cands, config_.ordering, r,
                                  AdmissionOptions{config_.block_capacity, config_.max_deferral, &placement_});
    if (config_.byzantine_leader && !res.rejected.empty()) {
      // A faulty leader slips one conflicting transaction into the order.
      const std::size_t idx = index_.at(res.rejected.front());
      OrderEntry e;
      e.position = static_cast<std::uint32_t>(res.order.entries.size());
      e.profile = state_[idx].profile;
      e.instance = e.profile.instance();
      res.order.entries.push_back(std::move(e));
      res.rejected.erase(res.rejected.begin());
    }

    RoundStats stats;
    stats.round = r;
    stats.trigger_time = now;
    stats.candidates = cands.size();
    stats.admitted = res.order.entries.size();
    stats.rejected = res.rejected.size();
    stats.capacity_deferred = res.capacity_deferred.size();
    result_.rounds.push_back(stats);
    result_.candidates += cands.size();
    result_.rejected += res.rejected.size();

    for (const auto* list : {&res.rejected, &res.capacity_deferred}) {
      for (TxnId id : *list) {
        const std::size_t idx = index_.at(id);
        ++state_[idx].deferrals;
        state_[idx].phase = Phase::Pool;
        pool_.push_back(idx);
      }
    }
    std::uint64_t digest = mix(0x6f72646572ULL, static_cast<std::uint64_t>(r));
    for (const auto& e : res.order.entries) {
      const std::size_t idx = index_.at(e.profile.txn_id);
      state_[idx].phase = Phase::Sequenced;
      ++state_[idx].sequenced;
      InstanceInfo& info = instances_[e.instance];
      info.round = r;
      info.position = e.position;
      info.sequenced = true;
      if (info.corrupted) ++result_.corrupted_profiles;
      ++result_.sequenced;
      digest = mix(digest, e.instance);
    }
    ready_.clear();

    // The sequence shard validates the order concurrently with execution.
    const ShardId seq = static_cast<ShardId>(((r - 1) / config_.epoch_rounds) % config_.n_shards);
    const ConsensusResult cr = run_consensus(seq, digest, assignment_, config_, consensus_rng_);
    Proof order_proof;
    order_proof.shard_id = seq;
    order_proof.round = r;
    order_proof.order_proof = true;
    order_proof.attestation = cr.attestation;
    const auto violations = admission_violations(res.order.entries, config_.ordering);
    for (std::size_t i = 0; i < res.order.entries.size(); ++i) {
      ProofEntry pe;
      pe.instance = res.order.entries[i].instance;
      pe.position = res.order.entries[i].position;
      if (violations[i]) {
        pe.verdict = Verdict::Invalid;
        pe.cause = InvalidCause::OrderViolation;
      }
      order_proof.entries.push_back(std::move(pe));
    }
    proofs_.push_back(std::move(order_proof));
    schedule(now + cr.latency_ms, {Ev::ProofReady, seq, r, proofs_.size() - 1});

    auto blocks = split_per_shard(res.order, placement_, lookup_);
    for (ShardId s = 0; s < config_.n_shards; ++s) {
      Block& b = blocks[s];
      b.shard_id = s;
      b.round = r;
    }
    for (const DispatchEvent& d : propose(res.order, blocks, config_.dispatch, now, cr.latency_ms, config_)) {
      schedule(d.arrival_time, {Ev::BlockArrive, d.shard, r});
    }
    staged_[r] = std::move(blocks);
    exec_remaining_ = config_.n_shards;
  }

  void try_execute(ShardId s, SimTime now) {
    if (busy_[s]) return;
    auto it = arrived_[s].find(shards_[s].next_round());
    if (it == arrived_[s].end()) return;
    const Block block = std::move(it->second);
    arrived_[s].erase(it);
    BlockExecution exec = shards_[s].execute_block(block, lookup_);
    busy_[s] = true;
    pending_proof_[s] = std::move(exec.proof);
    schedule(now + exec.compute_ms, {Ev::ExecDone, s, block.round});
  }

  void on_exec_done(ShardId s, Round r, SimTime now) {
    busy_[s] = false;
    if (trace_) trace_->exec_done[s].push_back(now);
    Proof proof = std::move(pending_proof_[s]);
    pending_proof_.erase(s);
    if (!proof.entries.empty()) {
      const ConsensusResult cr = run_consensus(s, proof.digest(), assignment_, config_, consensus_rng_);
      proof.attestation = cr.attestation;
      proofs_.push_back(std::move(proof));
      schedule(now + cr.latency_ms, {Ev::ProofReady, s, r, proofs_.size() - 1});
    }
    if (--exec_remaining_ == 0) schedule_preexec(now);
    try_execute(s, now);
  }

  void on_proof_ready(std::size_t index, SimTime now) {
    const Proof& proof = proofs_[index];
    if (proof.attestation.honest) {
      std::vector<InvalidFeedback> feedback;
      for (const auto& pe : proof.entries) {
        if (pe.verdict != Verdict::Invalid) continue;
        InstanceInfo& info = instances_[pe.instance];
        if (!info.direct_invalid) {
          info.direct_invalid = true;
          ++result_.invalid;
          ++result_.rounds.at(static_cast<std::size_t>(info.round - 1)).invalid;
        }
        if (pe.cause == InvalidCause::ProfileFault && config_.churn_enabled) {
          const auto& current = registry_.coalitions().at(info.coalition).members;
          auto was = info.members.find(proof.shard_id);
          auto now_member = current.find(proof.shard_id);
          if (was != info.members.end() && now_member != current.end() && was->second == now_member->second) {
            feedback.push_back({pe.instance, info.coalition, {proof.shard_id}});
          }
        }
      }
      if (!feedback.empty()) registry_.churn(feedback, assignment_, churn_rng_);
    }
    const double hop = transfer_time(static_cast<double>(proof.wire_bytes()), config_);
    for (ShardId d = 0; d < config_.n_shards; ++d) {
      schedule(d == proof.shard_id ? now : now + hop, {Ev::ProofArrive, d, proof.round, index});
    }
  }

  void on_proof_arrive(ShardId d, std::size_t index, SimTime now) {
    for (const Resolution& res : shards_[d].receive_proof(proofs_[index])) {
      InstanceInfo& info = instances_[res.instance];
      TxnState& ts = state_[info.txn];
      const TxnId id = txns_[info.txn].id;
      if (res.status == TxnStatus::Confirmed) {
        if (info.views_invalidated > 0) violation("txn " + std::to_string(id) + " confirmed and invalidated by different shards");
        if (++info.views_confirmed > 1) continue;
        ts.committed = true;
        ts.commit_time = now;
        ts.phase = Phase::Done;
        ++result_.rounds.at(static_cast<std::size_t>(info.round - 1)).confirmed;
        if (info.corrupted) {
          ++result_.corrupted_confirmed;
          violation("corrupted profile of txn " + std::to_string(id) + " was confirmed");
        }
        result_.log.push_back({info.round, info.position, id, instance_attempt(res.instance), "confirmed", now});
      } else if (res.status == TxnStatus::Invalidated) {
        if (info.views_confirmed > 0) violation("txn " + std::to_string(id) + " confirmed and invalidated by different shards");
        ++info.views_invalidated;
        if (info.views_invalidated == 1) {
          result_.log.push_back({info.round, info.position, id, instance_attempt(res.instance),
                                 info.direct_invalid ? "invalidated" : "cascaded", now});
        }
        if (info.views_invalidated == config_.n_shards) requeue(info.txn, now);
      }
    }
  }

  void requeue(std::size_t idx, SimTime now) {
    TxnState& ts = state_[idx];
    if (!config_.requeue_invalidated) {
      ts.phase = Phase::Done;
      return;
    }
    if (ts.attempt >= 0xffffu) throw Error("attempt counter overflow for txn " + std::to_string(txns_[idx].id));
    ++ts.attempt;
    ts.deferrals = 0;
    ts.phase = Phase::Pool;
    pool_.push_back(idx);
    ++result_.retries;
    if (idle_) {
      idle_ = false;
      schedule_preexec(now);
    }
  }

  void violation(std::string msg) {
    if (result_.violations.size() < 100) result_.violations.push_back(std::move(msg));
  }

  void finalize() {
    result_.end_time = queue_.now();
    result_.event_digest = log_.digest();
    result_.event_count = log_.count();
    for (const auto& shard : shards_) {
      for (const auto& [k, v] : shard.confirmed_state()) result_.final_state[k] = v;
      result_.rejected_proofs += shard.tracker().rejected_proofs();
    }
    for (const auto& [instance, info] : instances_) {
      if (!info.sequenced) continue;
      if (info.views_confirmed > 0) {
        result_.history.push_back({txns_[info.txn].id, instance_attempt(instance), info.round, info.position,
                                   state_[info.txn].commit_time});
      } else if (info.views_invalidated > 0 && !info.direct_invalid) {
        ++result_.cascaded;
        ++result_.rounds.at(static_cast<std::size_t>(info.round - 1)).cascaded;
      }
    }
    std::sort(result_.history.begin(), result_.history.end(), [](const CommittedTxn& a, const CommittedTxn& b) {
      return a.round != b.round ? a.round < b.round : a.position < b.position;
    });
    result_.drained = true;
    for (std::size_t i = 0; i < txns_.size(); ++i) {
      const TxnState& ts = state_[i];
      TxnOutcome o;
      o.txn_id = txns_[i].id;
      o.issue_time = txns_[i].issue_time;
      o.committed = ts.committed;
      o.commit_time = ts.commit_time;
      o.attempts = ts.sequenced;
      o.call_count = txns_[i].call_count();
      result_.txns.push_back(o);
      if (ts.phase != Phase::Done) result_.drained = false;
    }
  }

  const std::vector<Transaction>& txns_;
  const Placement& placement_;
  SimConfig config_;
  ProphetTrace* trace_;
  NodeAssignment assignment_;
  CoalitionRegistry registry_;
  Rng consensus_rng_;
  Rng churn_rng_;
  PreExecContext ctx_;
  TxnLookup lookup_;

  EventQueue<Payload> queue_;
  EventLog log_;
  std::vector<ShardRuntime> shards_;
  std::unordered_map<TxnId, std::size_t> index_;
  std::vector<std::size_t> arrival_;
  std::size_t cursor_ = 0;
  std::vector<TxnState> state_;
  std::unordered_map<InstanceId, InstanceInfo> instances_;
  std::vector<std::size_t> pool_;
  std::vector<std::size_t> ready_;
  bool preexec_pending_ = false;
  bool idle_ = false;
  Round round_ = 0;
  std::size_t exec_remaining_ = 0;

  std::map<Round, std::map<ShardId, Block>> staged_;
  std::vector<std::map<Round, Block>> arrived_;
  std::vector<bool> busy_;
  std::map<ShardId, Proof> pending_proof_;
  std::vector<Proof> proofs_;

  RunResult result_;
};

}  // namespace

RunResult run_prophet(const std::vector<Transaction>& txns, const Placement& placement, const SimConfig& config,
                      ProphetTrace* trace) {
  config.validate();
  Sim sim(txns, placement, config, trace);
  return sim.run();
}

}  // namespace prophet
