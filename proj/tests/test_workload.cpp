#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <doctest.h>

#include "helpers.hpp"
#include "prophet/workload.hpp"

using namespace prophet;
using namespace prophet::test;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("prophet_" + name)).string();
}

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = temp_path(name);
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  WorkloadParams p;
  p.n_txns = 300;
  const auto a = generate(p);
  const auto b = generate(p);
  CHECK(a == b);
  p.rng_seed = 2;
  CHECK(generate(p) != a);
}

TEST_CASE("default call-count mean lands near 8.94") {
  WorkloadParams p;  // 10,000 transactions
  const auto txns = generate(p);
  double total = 0.0;
  for (const auto& t : txns) total += static_cast<double>(t.call_count());
  const double mean = total / static_cast<double>(txns.size());
  CHECK(mean >= 8.49);
  CHECK(mean <= 9.39);
  CHECK(CallCountDistribution::ethereum_like().mean() == doctest::Approx(8.94).epsilon(1e-6));
}

TEST_CASE("point-mass call counts are exact") {
  WorkloadParams p;
  p.n_txns = 200;
  p.call_counts = CallCountDistribution::point_mass(3);
  for (const auto& t : generate(p)) CHECK(t.call_count() == 3);
}

TEST_CASE("issue times are nondecreasing Poisson arrivals") {
  WorkloadParams p;
  p.n_txns = 4000;
  p.arrival_tps = 100.0;
  const auto txns = generate(p);
  for (std::size_t i = 1; i < txns.size(); ++i) CHECK(txns[i].issue_time >= txns[i - 1].issue_time);
  const double rate = 1000.0 * static_cast<double>(txns.size()) / txns.back().issue_time;
  CHECK(rate == doctest::Approx(100.0).epsilon(0.05));
}

TEST_CASE("zipf skew concentrates accesses on low-rank contracts") {
  auto top_share = [](double skew) {
    WorkloadParams p;
    p.n_txns = 2000;
    p.hotness_skew = skew;
    std::map<ContractId, std::size_t> hits;
    std::size_t total = 0;
    for (const auto& t : generate(p)) {
      for (const auto& s : t.trace) {
        if (auto* c = std::get_if<CallStep>(&s)) {
          ++hits[c->target];
          ++total;
        }
      }
    }
    std::size_t best = 0;
    for (const auto& [c, n] : hits) best = std::max(best, n);
    return static_cast<double>(best) / static_cast<double>(total);
  };
  const double flat = top_share(0.0), skewed = top_share(1.0);
  CHECK(flat < 0.01);
  CHECK(skewed > 5.0 * flat);
}

TEST_CASE("trace round trip preserves every field") {
  WorkloadParams p;
  p.n_txns = 250;
  const auto txns = generate(p);
  const auto path = temp_path("roundtrip.trace");
  save_trace(path, txns, p.n_contracts);
  CHECK(load_trace(path) == txns);
  std::remove(path.c_str());
}

TEST_CASE("malformed traces name the offending line") {
  auto expect_error = [](const std::string& body, const std::string& fragment) {
    const auto path = write_temp("bad.trace", body);
    try {
      load_trace(path);
      FAIL("expected an error for: " << body);
    } catch (const Error& e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
    }
    std::remove(path.c_str());
  };
  expect_error("@contracts 2\n1 0 0 R(0,1)\n2 0 0 C(5,1,1)\n", "line 3: unknown contract 5");
  expect_error("1 0 0 Q(1)\n", "line 1: unknown step kind");
  expect_error("1 0 0 R(1)\n", "line 1: storage step");
  expect_error("1 0 0 X(-1)\n", "negative compute cost");
  expect_error("1 0 0 R(0,0)\n1 5 0 R(0,0)\n", "line 2: duplicate txn_id");
  expect_error("1 abc 0 R(0,0)\n", "bad issue_time");
  expect_error("1 0 0 X(1)\n", "references no contract");
  CHECK_THROWS_AS(load_trace(temp_path("does_not_exist.trace")), Error);
}

TEST_CASE("comments and blank lines are ignored") {
  const auto path = write_temp("comments.trace", "# header\n\n@contracts 3\n4 1.5 2 R(0,1) C(2,10,5) W(2,0) # tail\n");
  const auto txns = load_trace(path);
  REQUIRE(txns.size() == 1);
  CHECK(txns[0].id == 4);
  CHECK(txns[0].issue_time == 1.5);
  CHECK(txns[0].trace.size() == 3);
  std::remove(path.c_str());
}

TEST_CASE("placement is a balanced partition") {
  const auto ids = contract_ids(1000);
  for (std::uint32_t n : {1u, 3u, 16u}) {
    const auto p = place_contracts(ids, n, 7);
    std::vector<std::size_t> load(n);
    for (ContractId c : ids) ++load[p.shard_of(c)];
    for (auto l : load) {
      CHECK(l >= 1000 / n);
      CHECK(l <= 1000 / n + 1);
    }
  }
  CHECK_THROWS_AS(place_contracts(ids, 0, 1), Error);
}

TEST_CASE("cross-shard bytes vanish on one shard and never shrink when shards split") {
  WorkloadParams p;
  p.n_txns = 500;
  const auto txns = generate(p);
  const auto ids = contract_ids(p.n_contracts);
  const auto one = place_contracts(ids, 1, 7);
  for (const auto& t : txns) CHECK(cross_shard_bytes(t, one) == 0);
  // Splitting every shard of a contiguous placement in two only adds boundaries.
  const auto four = place_contracts(ids, 4, 7), eight = place_contracts(ids, 8, 7);
  for (const auto& t : txns) CHECK(cross_shard_bytes(t, four) <= cross_shard_bytes(t, eight));
}

TEST_CASE("invalid parameters are rejected") {
  WorkloadParams p;
  p.n_contracts = 0;
  CHECK_THROWS_AS(generate(p), Error);
  CHECK_THROWS_AS(CallCountDistribution({0.0, 0.0}), Error);
  CHECK_THROWS_AS(CallCountDistribution({1.0, -1.0}), Error);
}
