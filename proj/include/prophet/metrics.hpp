#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "prophet/history.hpp"
#include "prophet/simnet.hpp"

namespace prophet {

struct LatencySummary {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  bool operator==(const LatencySummary&) const = default;
};

struct MetricsReport {
  std::string mechanism;
  std::uint32_t n_shards = 0;
  std::uint64_t seed = 0;
  std::string ordering;
  std::size_t n_txns = 0;
  std::size_t confirmed = 0;
  std::size_t aborted = 0;
  double throughput_tps = 0.0;
  LatencySummary latency;
  double abort_ratio = 0.0;
  double invalid_ratio = 0.0;
  double cascade_ratio = 0.0;
  double conflict_ratio = 0.0;
  double mean_cross_shard_bytes = 0.0;
  double mean_retries = 0.0;
  /// Permanently aborted share per call count (baselines).
  std::map<std::size_t, double> abort_ratio_by_calls;
  std::vector<RoundStats> rounds;
  std::uint64_t event_digest = 0;
  bool drained = false;
  std::vector<std::string> violations;

  bool operator==(const MetricsReport&) const;
};

/// Nearest-rank percentile of an unsorted sample; 0 for an empty one.
double percentile(std::vector<double> sample, double q);

MetricsReport compute_metrics(const RunResult& run, const std::vector<Transaction>& txns, const Placement& placement,
                              const SimConfig& config);

/// Column order of the CSV output.
const std::vector<std::string>& csv_columns();

/// One `round` row per (seed, round) of every report, then one `summary` row
/// per report. No reports gives a header-only file.
void emit_csv(const std::vector<MetricsReport>& reports, std::ostream& out);
void emit_json(const std::vector<MetricsReport>& reports, std::ostream& out);
std::vector<MetricsReport> parse_json_reports(std::istream& in);

enum class OutputFormat { Csv, Json };
OutputFormat parse_format(const std::string& text);
void write_reports(const std::string& path, const std::vector<MetricsReport>& reports, OutputFormat format);

struct SecurityRow {
  std::uint64_t shard_size = 0;
  double failure_probability = 0.0;
  double security_bits = 0.0;  // -log2(probability), infinity when it is 0
  bool meets_target = false;
};

struct SecurityReport {
  std::uint64_t population = 0;
  std::uint64_t malicious = 0;
  double threshold_v = 0.0;
  unsigned lambda = 0;
  std::vector<SecurityRow> rows;
  std::uint64_t minimal_shard_size = 0;  // smallest m with P <= 2^-lambda; 0 if none in range
};

/// Failure probability of one shard for every size in [m_lo, m_hi], drawn
/// from `population` nodes of which a fraction `f` is malicious.
SecurityReport security_report(std::uint64_t population, double f, double v, unsigned lambda, std::uint64_t m_lo,
                               std::uint64_t m_hi);

}  // namespace prophet
