#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "prophet/core.hpp"
#include "prophet/random.hpp"

namespace prophet {

enum class CoopKind { Sequential, Overlap, Parallel };

struct CooperationMode {
  CoopKind kind = CoopKind::Parallel;
  unsigned lanes = 5;

  static CooperationMode parse(const std::string& text);  // sequential|overlap|parallel:<p>
  std::string to_string() const;
};

enum class DispatchMode { Pipelined, Serial };

struct ConsensusLatencyModel {
  enum class Kind { Fixed, LogNormal } kind = Kind::LogNormal;
  double fixed_ms = 500.0;
  double median_ms = 500.0;
  double sigma = 0.5;

  double draw(Rng& rng) const { return kind == Kind::Fixed ? fixed_ms : rng.lognormal(median_ms, sigma); }
};

/// Network, consensus and protocol parameters of one simulation run.
struct SimConfig {
  std::uint32_t n_shards = 4;
  std::uint32_t nodes_per_shard = 10;
  double link_latency_ms = 100.0;
  double link_bandwidth_mbps = 20.0;
  ConsensusLatencyModel consensus;
  double fault_threshold_v = 1.0 / 3.0;
  double malicious_fraction = 0.0;
  unsigned security_lambda = 17;
  std::uint64_t seed = 1;

  // Reconnaissance coalitions.
  std::uint32_t n_coalitions = 0;  // 0 means one per node slot (nodes_per_shard)
  CooperationMode coop_mode;
  double coalition_latency_ms = 2.0;
  std::size_t coalition_batch = 500;
  bool churn_enabled = true;

  // Sequencing and correction.
  OrderingRule ordering;
  std::size_t sequence_threshold = 1000;
  std::size_t block_capacity = 400;  // transactions per shard block
  std::uint32_t max_deferral = 20;
  std::uint32_t epoch_rounds = 20;
  DispatchMode dispatch = DispatchMode::Pipelined;
  bool requeue_invalidated = true;
  bool byzantine_leader = false;
  /// Per-shard multiplier on consensus latency (empty means all 1).
  std::vector<double> shard_slowdown;

  // Baselines.
  std::uint32_t max_retry = 10;

  /// Upper bound on simulated time after the last issue before a run stops.
  double drain_limit_ms = 600'000.0;

  void validate() const;
  std::uint32_t coalition_count() const { return n_coalitions ? n_coalitions : nodes_per_shard; }
};

/// Milliseconds to push `bytes` over one link: latency plus serialization.
double transfer_time(double bytes, double latency_ms, double bandwidth_mbps);
inline double transfer_time(double bytes, const SimConfig& c) {
  return transfer_time(bytes, c.link_latency_ms, c.link_bandwidth_mbps);
}

/// Priority queue of timed events ordered by (fire_time, seq_no).
template <class Payload>
class EventQueue {
 public:
  struct Event {
    SimTime fire_time = 0.0;
    std::uint64_t seq_no = 0;
    Payload payload{};
  };

  std::uint64_t schedule(SimTime fire_time, Payload payload) {
    if (fire_time < now_) {
      throw Error("event scheduled in the past (" + std::to_string(fire_time) + " < " + std::to_string(now_) + ")");
    }
    const std::uint64_t seq = next_seq_++;
    heap_.push(Event{fire_time, seq, std::move(payload)});
    return seq;
  }

  /// Next event, or nullopt at end of simulation.
  std::optional<Event> next() {
    if (heap_.empty()) return std::nullopt;
    Event ev = heap_.top();
    heap_.pop();
    now_ = ev.fire_time;
    return ev;
  }

  SimTime now() const { return now_; }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.fire_time != b.fire_time ? a.fire_time > b.fire_time : a.seq_no > b.seq_no;
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  SimTime now_ = 0.0;
};

/// Running digest over processed events; equal digests mean equal timelines.
class EventLog {
 public:
  void record(SimTime t, std::uint64_t kind, std::uint64_t a = 0, std::uint64_t b = 0) {
    digest_ = mix(digest_, std::bit_cast<std::uint64_t>(t));
    digest_ = mix(digest_, kind);
    digest_ = mix(digest_, a);
    digest_ = mix(digest_, b);
    ++count_;
  }
  std::uint64_t digest() const { return digest_; }
  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  std::uint64_t count_ = 0;
};

struct NodeAssignment {
  std::vector<ShardId> shard_of;      // indexed by node id
  std::vector<bool> malicious;        // indexed by node id
  std::vector<std::vector<NodeId>> members;  // per shard

  std::size_t malicious_in(ShardId s) const;
};

/// Uniform random partition of n_shards * nodes_per_shard nodes; malicious
/// flags are i.i.d. with probability malicious_fraction.
NodeAssignment assign_nodes(const SimConfig& config);

struct ConsensusResult {
  Attestation attestation;
  double latency_ms = 0.0;
};

/// Abstract intra-shard consensus: one latency draw and an honesty verdict
/// (malicious fraction in the shard <= v).
ConsensusResult run_consensus(ShardId shard, std::uint64_t payload_digest, const NodeAssignment& assignment,
                              const SimConfig& config, Rng& rng);

/// P[X > v*m] for X ~ Hypergeometric(population n, malicious_count, draws m):
/// the chance that one randomly sampled shard of m nodes exceeds threshold v.
double shard_failure_probability(std::uint64_t n, std::uint64_t m, std::uint64_t malicious_count, double v);

}  // namespace prophet
