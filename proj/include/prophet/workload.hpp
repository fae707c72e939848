#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prophet/core.hpp"

namespace prophet {

/// Discrete distribution over the number of inter-contract calls per transaction.
class CallCountDistribution {
 public:
  CallCountDistribution() = default;
  explicit CallCountDistribution(std::vector<double> weights);

  /// Geometric-shaped distribution on 0..max_calls with the requested mean.
  static CallCountDistribution truncated_geometric(double mean, std::size_t max_calls);
  static CallCountDistribution point_mass(std::size_t calls);
  /// 8.94 mean, truncated at 32 calls.
  static CallCountDistribution ethereum_like();

  const std::vector<double>& pmf() const { return pmf_; }
  const std::vector<double>& cdf() const { return cdf_; }
  double mean() const;
  double tail_above(std::size_t k) const;

 private:
  std::vector<double> pmf_;
  std::vector<double> cdf_;
};

struct WorkloadParams {
  std::size_t n_txns = 10'000;
  std::size_t n_contracts = 1'000;
  CallCountDistribution call_counts = CallCountDistribution::ethereum_like();
  double hotness_skew = 1.0;  // Zipf exponent over contract popularity
  std::uint32_t slots_per_contract = 256;
  double mean_compute_ms = 0.5;  // per compute step
  double mean_payload_bytes = 22.0;
  double mean_return_bytes = 14.0;
  double write_probability = 0.5;  // chance a contract segment writes a slot
  double arrival_tps = 40.0;       // Poisson issue rate; <= 0 issues everything at t=0
  std::uint64_t rng_seed = 1;

  /// Zipf-skewed contract popularity, the contention-heavy default.
  static WorkloadParams conflict_heavy();
  /// Uniform contract popularity.
  static WorkloadParams uniform();
};

std::vector<Transaction> generate(const WorkloadParams& params);

/// Writes transactions in the line-oriented trace format. When `n_contracts`
/// is nonzero an `@contracts` header declares contracts 0..n-1.
void save_trace(const std::string& path, const std::vector<Transaction>& txns, std::size_t n_contracts = 0);

/// Loads a trace file. Malformed records and references to undeclared
/// contracts raise Error naming the line.
std::vector<Transaction> load_trace(const std::string& path);

std::vector<ContractId> contract_ids(std::size_t n_contracts);

/// All contracts referenced by the transactions, ascending.
std::vector<ContractId> referenced_contracts(const std::vector<Transaction>& txns);

/// Hash-ranked contiguous placement: contracts are ordered by a seeded hash
/// and the order is cut into n_shards equal ranges, so doubling the shard
/// count splits each shard in two.
Placement place_contracts(const std::vector<ContractId>& contracts, std::uint32_t n_shards, std::uint64_t seed);

/// Sum of cross-shard message bytes a transaction produces under a placement.
std::uint64_t cross_shard_bytes(const Transaction& txn, const Placement& placement);

}  // namespace prophet
