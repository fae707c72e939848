#include <doctest.h>

#include "helpers.hpp"
#include "prophet/oracle.hpp"
#include "prophet/sequencer.hpp"
#include "prophet/shard_runtime.hpp"

using namespace prophet;
using namespace prophet::test;

namespace {

// Two shards (even contracts on 0, odd on 1) driven round by round.
struct Harness {
  Placement placement = modulo_placement(16, 2);
  OrderingRule rule = OrderingRule::parse("rwdep");
  std::vector<Transaction> txns;
  std::vector<ShardRuntime> shards;
  Round round = 0;

  Harness() {
    txns.reserve(64);
    for (ShardId s = 0; s < 2; ++s) shards.emplace_back(s, &placement, rule);
  }

  const Transaction& add(std::vector<Step> trace) {
    txns.push_back(txn(txns.size() + 1, std::move(trace)));
    return txns.back();
  }

  // Optimistic head: what the shards currently hold.
  StateReader head() const {
    return [this](const StorageKey& k) { return shards[placement.shard_of(k.contract)].store().read_latest(k); };
  }

  TransactionProfile profile(const Transaction& t) const {
    return make_profile(t, execute(t, placement, head()), Granularity::StateLevel, round, 0);
  }

  // Executes one round; returns every proof it produced (order proof last).
  std::vector<Proof> run_round(const std::vector<TransactionProfile>& profiles) {
    ++round;
    GlobalOrder order;
    order.round = round;
    Proof order_proof;
    order_proof.order_proof = true;
    order_proof.round = round;
    for (const auto& p : profiles) {
      OrderEntry e;
      e.position = static_cast<std::uint32_t>(order.entries.size());
      e.instance = p.instance();
      e.profile = p;
      order.entries.push_back(e);
      ProofEntry pe;
      pe.instance = e.instance;
      order_proof.entries.push_back(pe);
    }
    auto blocks = split_per_shard(order, placement, lookup_in(txns));
    std::vector<Proof> proofs;
    for (auto& sh : shards) {
      Block b = blocks.count(sh.id()) ? blocks.at(sh.id()) : Block{sh.id(), round, {}, {}};
      proofs.push_back(sh.execute_block(b, lookup_in(txns)).proof);
    }
    proofs.push_back(order_proof);
    return proofs;
  }

  void deliver(const Proof& p) {
    for (auto& sh : shards) sh.receive_proof(p);
  }
  void deliver_all(const std::vector<Proof>& ps) {
    for (const auto& p : ps) deliver(p);
  }

  TxnStatus status(const Transaction& t) const {
    const auto a = shards[0].status(make_instance(t.id, 0));
    CHECK(a == shards[1].status(make_instance(t.id, 0)));
    return a;
  }
};

const ProofEntry& entry_for(const Proof& p, TxnId id) {
  for (const auto& e : p.entries) {
    if (instance_txn(e.instance) == id) return e;
  }
  throw std::out_of_range("no proof entry");
}

}  // namespace

TEST_CASE("valid cross-shard transaction confirms only after every related proof") {
  Harness h;
  const auto& t = h.add({R(0, 1), W(0, 1), C(1), W(1, 1)});
  const auto proofs = h.run_round({h.profile(t)});
  REQUIRE(proofs.size() == 3);
  CHECK(entry_for(proofs[0], t.id).verdict == Verdict::Valid);
  CHECK(entry_for(proofs[1], t.id).verdict == Verdict::Valid);

  h.deliver(proofs[0]);
  h.deliver(proofs[2]);
  CHECK(h.status(t) == TxnStatus::Pending);
  h.deliver(proofs[1]);
  CHECK(h.status(t) == TxnStatus::Confirmed);
}

TEST_CASE("proofs from an unsafe shard are ignored") {
  Harness h;
  const auto& t = h.add({W(0, 1)});
  auto proofs = h.run_round({h.profile(t)});
  proofs[0].attestation.honest = false;
  h.deliver_all(proofs);
  CHECK(h.status(t) == TxnStatus::Pending);
  CHECK(h.shards[0].tracker().rejected_proofs() == 1);
}

TEST_CASE("stale profile is invalid and honest re-execution disagrees with it") {
  Harness h;
  const auto& writer = h.add({R(0, 3), W(0, 3)});
  const auto& reader = h.add({R(0, 3), W(2, 9)});
  const auto stale = h.profile(reader);  // taken on genesis
  h.deliver_all(h.run_round({h.profile(writer)}));
  CHECK(h.status(writer) == TxnStatus::Confirmed);

  // Oracle: re-executing honestly on the current state gives a different profile.
  CHECK_FALSE(same_profile_content(stale, h.profile(reader)));
  const auto proofs = h.run_round({stale});
  const auto& e = entry_for(proofs[0], reader.id);
  CHECK(e.verdict == Verdict::Invalid);
  CHECK(e.cause == InvalidCause::Stale);
  h.deliver_all(proofs);
  CHECK(h.status(reader) == TxnStatus::Invalidated);
}

TEST_CASE("a lying profile is classified as a profile fault") {
  Harness h;
  const auto& t = h.add({R(0, 2), C(1), R(1, 4), W(1, 4)});
  auto prof = h.profile(t);
  prof.rw_set.writes.erase({1, 4});
  prof.rw_set.writes.insert({1, 5});
  const auto proofs = h.run_round({prof});
  CHECK(entry_for(proofs[1], t.id).cause == InvalidCause::ProfileFault);
  h.deliver_all(proofs);
  CHECK(h.status(t) == TxnStatus::Invalidated);
  CHECK_FALSE(h.shards[1].store().has_writes(prof.instance()));
}

TEST_CASE("an order that breaks the admission rule is rejected locally") {
  Harness h;
  const auto& a = h.add({W(0, 1)});
  const auto& b = h.add({R(0, 1)});
  const auto proofs = h.run_round({h.profile(a), h.profile(b)});
  CHECK(entry_for(proofs[0], a.id).verdict == Verdict::Valid);
  CHECK(entry_for(proofs[0], b.id).cause == InvalidCause::OrderViolation);
}

namespace {

// T1 spans both shards and lies about its shard-1 key; T2 reads what T1
// wrote on shard 0 a round later; T3 is unrelated. T1's verdicts arrive
// either before round 3 or after everything else.
struct CascadeScenario {
  Harness h;
  const Transaction* t1;
  const Transaction* t2;
  const Transaction* t3;
  std::vector<Proof> r1, r2, r3;

  explicit CascadeScenario(bool delay_invalid) {
    t1 = &h.add({R(0, 0), W(0, 0), C(1), R(1, 0), W(1, 0)});
    t2 = &h.add({R(0, 0), W(0, 4)});
    t3 = &h.add({R(2, 7), W(2, 7)});
    auto p1 = h.profile(*t1);
    p1.rw_set.writes.erase({1, 0});
    p1.rw_set.writes.insert({1, 9});
    r1 = h.run_round({p1});
    CHECK(entry_for(r1[0], t1->id).verdict == Verdict::Valid);  // shard 0 cannot see the lie
    CHECK(entry_for(r1[1], t1->id).verdict == Verdict::Invalid);

    r2 = h.run_round({h.profile(*t2), h.profile(*t3)});
    CHECK(entry_for(r2[0], t2->id).verdict == Verdict::Valid);
    CHECK(entry_for(r2[0], t2->id).predecessors == std::vector<InstanceId>{make_instance(t1->id, 0)});
    if (!delay_invalid) h.deliver_all(r1);
    r3 = h.run_round({});
    if (delay_invalid) {
      h.deliver(r1[0]);
      h.deliver(r1[2]);
    }
    h.deliver_all(r2);
    h.deliver_all(r3);
    if (delay_invalid) h.deliver(r1[1]);
  }

  void check() {
    CHECK(h.status(*t1) == TxnStatus::Invalidated);
    CHECK(h.status(*t2) == TxnStatus::Invalidated);
    CHECK(h.status(*t3) == TxnStatus::Confirmed);
    // Oracle: serial replay with the invalid transaction and its dependents removed.
    const auto oracle = ideal_execute({t3}, h.placement).final_state;
    std::map<StorageKey, Value> confirmed;
    for (const auto& sh : h.shards) {
      for (const auto& [k, v] : sh.confirmed_state()) confirmed[k] = v;
    }
    CHECK(confirmed == oracle);
    CHECK(h.shards[0].store().read_latest({0, 0}) == genesis_value({0, 0}));
    CHECK(h.shards[0].store().read_latest({0, 4}) == genesis_value({0, 4}));
  }
};

}  // namespace

TEST_CASE("cascade invalidates a later reader and spares an unrelated transaction") {
  CascadeScenario s(false);
  s.check();
}

TEST_CASE("an invalid proof arriving rounds late still cascades") {
  CascadeScenario s(true);
  s.check();
}

TEST_CASE("confirmation waits for predecessors") {
  Harness h;
  const auto& a = h.add({W(0, 1)});
  const auto& b = h.add({R(0, 1), W(0, 2)});
  const auto r1 = h.run_round({h.profile(a)});
  const auto r2 = h.run_round({h.profile(b)});
  h.deliver_all(r2);
  CHECK(h.status(b) == TxnStatus::Pending);
  h.deliver_all(r1);
  CHECK(h.status(a) == TxnStatus::Confirmed);
  CHECK(h.status(b) == TxnStatus::Confirmed);
}

TEST_CASE("blocks must arrive in round order at the right shard") {
  Harness h;
  Block b;
  b.shard_id = 1;
  b.round = 1;
  CHECK_THROWS_AS(h.shards[0].execute_block(b, lookup_in(h.txns)), Error);
  b.shard_id = 0;
  b.round = 2;
  CHECK_THROWS_AS(h.shards[0].execute_block(b, lookup_in(h.txns)), Error);
  b.round = 1;
  CHECK_NOTHROW(h.shards[0].execute_block(b, lookup_in(h.txns)));
  CHECK(h.shards[0].next_round() == 2);
}
