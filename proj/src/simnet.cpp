#include "prophet/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prophet {

CooperationMode CooperationMode::parse(const std::string& text) {
  if (text == "sequential") return {CoopKind::Sequential, 1};
  if (text == "overlap") return {CoopKind::Overlap, 1};
  if (text.rfind("parallel", 0) == 0) {
    unsigned lanes = 5;
    if (text.size() > 8) {
      if (text[8] != ':') throw Error("bad cooperation mode '" + text + "'");
      try {
        lanes = static_cast<unsigned>(std::stoul(text.substr(9)));
      } catch (const std::exception&) {
        throw Error("bad lane count in '" + text + "'");
      }
    }
    if (lanes == 0) throw Error("parallel cooperation needs at least one lane");
    return {CoopKind::Parallel, lanes};
  }
  throw Error("unknown cooperation mode '" + text + "' (sequential|overlap|parallel:<p>)");
}

std::string CooperationMode::to_string() const {
  switch (kind) {
    case CoopKind::Sequential:
      return "sequential";
    case CoopKind::Overlap:
      return "overlap";
    case CoopKind::Parallel:
      return "parallel:" + std::to_string(lanes);
  }
  return "?";
}

void SimConfig::validate() const {
  if (n_shards == 0) throw Error("n_shards must be positive");
  if (nodes_per_shard == 0) throw Error("nodes_per_shard must be positive");
  if (link_latency_ms < 0.0) throw Error("link_latency_ms must be non-negative");
  if (link_bandwidth_mbps <= 0.0) throw Error("link_bandwidth_mbps must be positive");
  if (fault_threshold_v <= 0.0 || fault_threshold_v > 1.0) throw Error("fault_threshold_v must be in (0, 1]");
  if (malicious_fraction < 0.0 || malicious_fraction > 1.0) throw Error("malicious_fraction must be in [0, 1]");
  if (coop_mode.kind == CoopKind::Parallel && coop_mode.lanes == 0) throw Error("parallel lanes must be positive");
  if (sequence_threshold == 0) throw Error("sequence_threshold must be positive");
  if (block_capacity == 0) throw Error("block_capacity must be positive");
  if (coalition_batch == 0) throw Error("coalition_batch must be positive");
  if (epoch_rounds == 0) throw Error("epoch_rounds must be positive");
  if (!shard_slowdown.empty() && shard_slowdown.size() != n_shards) {
    throw Error("shard_slowdown needs one entry per shard");
  }
  if (consensus.kind == ConsensusLatencyModel::Kind::Fixed ? consensus.fixed_ms < 0.0 : consensus.median_ms <= 0.0) {
    throw Error("consensus latency must be positive");
  }
}

double transfer_time(double bytes, double latency_ms, double bandwidth_mbps) {
  // bits / (Mbit/s) = microseconds; divide by 1000 for ms.
  return latency_ms + bytes * 8.0 / (bandwidth_mbps * 1000.0);
}

std::size_t NodeAssignment::malicious_in(ShardId s) const {
  std::size_t n = 0;
  for (NodeId node : members.at(s)) n += malicious[node] ? 1 : 0;
  return n;
}

NodeAssignment assign_nodes(const SimConfig& config) {
  const std::size_t total = std::size_t{config.n_shards} * config.nodes_per_shard;
  Rng rng(mix(config.seed, 0x6e6f646573ULL));
  std::vector<NodeId> perm(total);
  std::iota(perm.begin(), perm.end(), NodeId{0});
  for (std::size_t i = total; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  NodeAssignment a;
  a.shard_of.resize(total);
  a.malicious.resize(total);
  a.members.assign(config.n_shards, {});
  for (std::size_t i = 0; i < total; ++i) {
    const auto shard = static_cast<ShardId>(i / config.nodes_per_shard);
    a.shard_of[perm[i]] = shard;
    a.members[shard].push_back(perm[i]);
  }
  for (auto& m : a.members) std::sort(m.begin(), m.end());
  for (std::size_t node = 0; node < total; ++node) a.malicious[node] = rng.bernoulli(config.malicious_fraction);
  return a;
}

ConsensusResult run_consensus(ShardId shard, std::uint64_t payload_digest, const NodeAssignment& assignment,
                              const SimConfig& config, Rng& rng) {
  ConsensusResult r;
  const auto& members = assignment.members.at(shard);
  const double fraction = members.empty() ? 0.0 : static_cast<double>(assignment.malicious_in(shard)) / members.size();
  r.attestation.issuer = shard;
  r.attestation.honest = fraction <= config.fault_threshold_v + 1e-12;
  r.attestation.payload_digest = payload_digest;
  r.latency_ms = config.consensus.draw(rng);
  if (!config.shard_slowdown.empty()) r.latency_ms *= config.shard_slowdown[shard];
  return r;
}

double shard_failure_probability(std::uint64_t n, std::uint64_t m, std::uint64_t malicious_count, double v) {
  if (n == 0) throw Error("population must be positive");
  if (m > n) throw Error("shard size exceeds population");
  if (malicious_count > n) throw Error("malicious count exceeds population");
  if (!(v > 0.0) || v > 1.0) throw Error("threshold v must be in (0, 1]");
  if (malicious_count == 0 || m == 0) return 0.0;

  // Smallest k with k > v*m. The epsilon keeps v*m exact for v = 1/3, 1/2.
  const auto k_min = static_cast<std::uint64_t>(std::floor(v * static_cast<double>(m) + 1e-9)) + 1;
  const std::uint64_t lo = std::max<std::uint64_t>(k_min, m > n - malicious_count ? m - (n - malicious_count) : 0);
  const std::uint64_t hi = std::min(m, malicious_count);
  if (lo > hi) return 0.0;

  auto log_choose = [](std::uint64_t a, std::uint64_t b) {
    return std::lgamma(static_cast<long double>(a) + 1) - std::lgamma(static_cast<long double>(b) + 1) -
           std::lgamma(static_cast<long double>(a - b) + 1);
  };
  const long double log_total = log_choose(n, m);
  long double sum = 0.0L;
  for (std::uint64_t k = lo; k <= hi; ++k) {
    sum += std::exp(log_choose(malicious_count, k) + log_choose(n - malicious_count, m - k) - log_total);
  }
  return static_cast<double>(std::min(sum, 1.0L));
}

}  // namespace prophet
