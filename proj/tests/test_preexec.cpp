#include <algorithm>
#include <numeric>

#include <doctest.h>

#include "helpers.hpp"
#include "prophet/oracle.hpp"
#include "prophet/preexec.hpp"
#include "prophet/random.hpp"
#include "prophet/workload.hpp"

using namespace prophet;
using namespace prophet::test;

namespace {

struct World {
  WorkloadParams params;
  std::vector<Transaction> txns;
  Placement placement;
  SimConfig cfg;
  NodeAssignment nodes;

  explicit World(double malicious = 0.0, std::size_t n = 200) {
    params.n_txns = n;
    params.n_contracts = 60;
    txns = generate(params);
    cfg.n_shards = 4;
    cfg.nodes_per_shard = 8;
    cfg.malicious_fraction = malicious;
    placement = place_contracts(contract_ids(params.n_contracts), cfg.n_shards, 7);
    nodes = assign_nodes(cfg);
  }

  Coalition whole_space(std::map<ShardId, NodeId> members) const {
    Coalition c;
    c.members = std::move(members);
    c.range.to_end = true;
    return c;
  }

  PreExecContext ctx() const { return {&placement, &nodes, Granularity::StateLevel, {}, 99}; }
};

std::vector<PreExecRequest> requests_for(const std::vector<Transaction>& txns) {
  std::vector<PreExecRequest> out;
  for (const auto& t : txns) out.push_back({&t, 0});
  return out;
}

// Snapshot with some keys already overwritten.
std::map<StorageKey, Value> snapshot_state() {
  std::map<StorageKey, Value> s;
  for (ContractId c = 0; c < 60; c += 3) {
    for (std::uint32_t slot = 0; slot < 256; slot += 5) s[{c, slot}] = mix(c, slot + 1000);
  }
  return s;
}

}  // namespace

TEST_CASE("honest profiles equal the oracle's profiles on the same snapshot") {
  World w;
  const auto snap = snapshot_state();
  const StateReader reader = [&](const StorageKey& k) {
    auto it = snap.find(k);
    return it != snap.end() ? it->second : genesis_value(k);
  };
  const auto honest = w.whole_space({{0, w.nodes.members[0][0]},
                                     {1, w.nodes.members[1][0]},
                                     {2, w.nodes.members[2][0]},
                                     {3, w.nodes.members[3][0]}});
  const auto reqs = requests_for(w.txns);
  const auto batch = pre_execute(honest, reqs, reader, 3, w.ctx());
  REQUIRE(batch.results.size() == w.txns.size());
  for (std::size_t i = 0; i < w.txns.size(); ++i) {
    const auto oracle = ideal_execute({&w.txns[i]}, w.placement, snap);
    CHECK(same_profile_content(batch.results[i].profile, oracle.profiles[0]));
    CHECK(batch.results[i].profile.base_round == 3);
    CHECK_FALSE(batch.results[i].corrupted);
  }
}

TEST_CASE("permuting the batch never changes an honest profile") {
  World w;
  const StateReader genesis = [](const StorageKey& k) { return genesis_value(k); };
  const auto c = w.whole_space({{0, w.nodes.members[0][1]},
                                {1, w.nodes.members[1][1]},
                                {2, w.nodes.members[2][1]},
                                {3, w.nodes.members[3][1]}});
  auto reqs = requests_for(w.txns);
  const auto base = pre_execute(c, reqs, genesis, 0, w.ctx());
  std::map<TxnId, TransactionProfile> by_id;
  for (const auto& r : base.results) by_id[r.profile.txn_id] = r.profile;

  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    for (std::size_t i = reqs.size(); i > 1; --i) std::swap(reqs[i - 1], reqs[rng.below(i)]);
    for (const auto& r : pre_execute(c, reqs, genesis, 0, w.ctx()).results) CHECK(r.profile == by_id.at(r.profile.txn_id));
  }
}

TEST_CASE("a transaction touching a shard the coalition lacks is skipped") {
  World w(0.0, 50);
  const auto partial = w.whole_space({{0, w.nodes.members[0][0]}});
  const StateReader genesis = [](const StorageKey& k) { return genesis_value(k); };
  const auto reqs = requests_for(w.txns);
  const auto batch = pre_execute(partial, reqs, genesis, 0, w.ctx());
  CHECK(batch.results.size() + batch.skipped.size() == w.txns.size());
  for (const auto& r : batch.results) {
    CHECK(related_shards(*std::find_if(w.txns.begin(), w.txns.end(),
                                       [&](const Transaction& t) { return t.id == r.profile.txn_id; }),
                         w.placement) == std::set<ShardId>{0});
  }
}

TEST_CASE("requests outside the hash range are refused") {
  World w(0.0, 20);
  Coalition c = w.whole_space({});
  c.range = {0, 1, false};
  const StateReader genesis = [](const StorageKey& k) { return genesis_value(k); };
  const auto reqs = requests_for(w.txns);
  CHECK_THROWS_AS(pre_execute(c, reqs, genesis, 0, w.ctx()), Error);
}

TEST_CASE("every corrupted profile fails re-execution on some related shard") {
  World w(0.5, 300);
  const StateReader genesis = [](const StorageKey& k) { return genesis_value(k); };
  const auto reg = CoalitionRegistry::round_robin(w.nodes, 8, CooperationMode{});
  std::size_t corrupted = 0;
  for (const auto& t : w.txns) {
    const auto& c = reg.coalition_for(t.id, 0);
    const PreExecRequest req{&t, 0};
    const auto batch = pre_execute(c, std::span(&req, 1), genesis, 0, w.ctx());
    REQUIRE(batch.results.size() == 1);
    const auto& r = batch.results[0];
    bool detected = false;
    for (ShardId s : related_shards(t, w.placement)) {
      detected = detected || !execute_on_shard(t, w.placement, s, r.profile, genesis).matches;
    }
    CHECK(detected == r.corrupted);
    corrupted += r.corrupted ? 1 : 0;
  }
  CHECK(corrupted > 50);
}

TEST_CASE("cooperation timing on a hand-computed batch") {
  const std::vector<TxnCost> costs(3, TxnCost{1.0, 7.0});
  CHECK(simulate_timing({CoopKind::Sequential, 1}, costs) == 24.0);
  // cpu 1,2,3; link 8, 15, 22
  CHECK(simulate_timing({CoopKind::Overlap, 1}, costs) == 22.0);
  CHECK(simulate_timing({CoopKind::Parallel, 5}, costs) == 8.0);
  CHECK(simulate_timing({CoopKind::Parallel, 2}, costs) == 16.0);
  CHECK(simulate_timing({CoopKind::Sequential, 1}, {}) == 0.0);
}

TEST_CASE("cooperation timing bounds on random batches") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TxnCost> costs(1 + rng.below(40));
    double compute = 0.0, comm = 0.0, longest = 0.0;
    for (auto& c : costs) {
      c = {rng.uniform(0.0, 3.0), rng.uniform(0.0, 20.0)};
      compute += c.compute_ms;
      comm += c.comm_ms;
      longest = std::max(longest, c.compute_ms + c.comm_ms);
    }
    const double seq = simulate_timing({CoopKind::Sequential, 1}, costs);
    const double ovl = simulate_timing({CoopKind::Overlap, 1}, costs);
    CHECK(seq == doctest::Approx(compute + comm));
    CHECK(ovl <= seq + 1e-9);
    CHECK(ovl >= std::max(compute, comm) - 1e-9);
    CHECK(simulate_timing({CoopKind::Parallel, 1}, costs) == doctest::Approx(seq));
    for (unsigned p : {2u, 5u}) {
      const double par = simulate_timing({CoopKind::Parallel, p}, costs);
      CHECK(par >= std::max(seq / p, longest) - 1e-9);
      CHECK(par <= seq / p + longest + 1e-9);
    }
  }
}

TEST_CASE("txn cost counts compute and one transfer per message leg") {
  const auto p = modulo_placement(2, 2);
  const auto t = txn(1, {R(0, 0), X(2.0), C(1, 100, 50), X(3.0)});
  const auto cost = txn_cost(t, p, {10.0, 20.0});
  CHECK(cost.compute_ms == 5.0);
  CHECK(cost.comm_ms == doctest::Approx(20.0 + 150.0 * 8.0 / 20000.0));
}

TEST_CASE("round-robin coalitions cover the hash space without overlap") {
  SimConfig cfg;
  cfg.n_shards = 3;
  cfg.nodes_per_shard = 4;
  const auto nodes = assign_nodes(cfg);
  for (std::uint32_t k : {1u, 3u, 7u}) {
    const auto reg = CoalitionRegistry::round_robin(nodes, k, CooperationMode{});
    REQUIRE(reg.coalitions().size() == k);
    for (TxnId t = 0; t < 500; ++t) {
      int owners = 0;
      for (const auto& c : reg.coalitions()) owners += c.range.contains(routing_hash(t, 0)) ? 1 : 0;
      CHECK(owners == 1);
    }
    for (const auto& c : reg.coalitions()) {
      for (ShardId s = 0; s < 3; ++s) CHECK(c.members.at(s) == nodes.members[s][c.id % 4]);
    }
  }
  CHECK_THROWS_AS(CoalitionRegistry::round_robin(nodes, 0, CooperationMode{}), Error);
}

TEST_CASE("churn replaces a blamed member and honest members blacklist it") {
  SimConfig cfg;
  cfg.n_shards = 2;
  cfg.nodes_per_shard = 4;
  auto nodes = assign_nodes(cfg);
  std::fill(nodes.malicious.begin(), nodes.malicious.end(), false);
  auto reg = CoalitionRegistry::round_robin(nodes, 1, CooperationMode{});
  const NodeId blamed = reg.coalitions()[0].members.at(1);
  const NodeId partner = reg.coalitions()[0].members.at(0);
  nodes.malicious[blamed] = true;

  Rng rng(1);
  reg.churn({{0, 0, {1}}}, nodes, rng);
  const NodeId replacement = reg.coalitions()[0].members.at(1);
  CHECK(replacement != blamed);
  CHECK(nodes.shard_of[replacement] == 1);
  CHECK(reg.blacklist(partner).count(blamed) == 1);
  CHECK(reg.coalitions()[0].members.at(0) == partner);
}

TEST_CASE("a fully malicious coalition is never churned") {
  SimConfig cfg;
  cfg.n_shards = 2;
  cfg.nodes_per_shard = 3;
  auto nodes = assign_nodes(cfg);
  std::fill(nodes.malicious.begin(), nodes.malicious.end(), true);
  const auto reg = CoalitionRegistry::round_robin(nodes, 1, CooperationMode{});
  Rng rng(2);
  const auto after = coalition_churn(reg, {{0, 0, {0, 1}}}, nodes, rng);
  CHECK(after[0].members == reg.coalitions()[0].members);
}
