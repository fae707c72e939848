#include "prophet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "prophet/workload.hpp"

namespace prophet {

using nlohmann::json;

bool MetricsReport::operator==(const MetricsReport& o) const {
  auto rounds_eq = [](const RoundStats& a, const RoundStats& b) {
    return a.round == b.round && a.trigger_time == b.trigger_time && a.candidates == b.candidates &&
           a.admitted == b.admitted && a.rejected == b.rejected && a.capacity_deferred == b.capacity_deferred &&
           a.invalid == b.invalid && a.cascaded == b.cascaded && a.confirmed == b.confirmed;
  };
  return mechanism == o.mechanism && n_shards == o.n_shards && seed == o.seed && ordering == o.ordering &&
         n_txns == o.n_txns && confirmed == o.confirmed && aborted == o.aborted && throughput_tps == o.throughput_tps &&
         latency == o.latency && abort_ratio == o.abort_ratio && invalid_ratio == o.invalid_ratio &&
         cascade_ratio == o.cascade_ratio && conflict_ratio == o.conflict_ratio &&
         mean_cross_shard_bytes == o.mean_cross_shard_bytes && mean_retries == o.mean_retries &&
         abort_ratio_by_calls == o.abort_ratio_by_calls &&
         std::equal(rounds.begin(), rounds.end(), o.rounds.begin(), o.rounds.end(), rounds_eq) &&
         event_digest == o.event_digest && drained == o.drained && violations == o.violations;
}

double percentile(std::vector<double> sample, double q) {
  if (sample.empty()) return 0.0;
  std::sort(sample.begin(), sample.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sample.size())));
  return sample[std::clamp<std::size_t>(rank, 1, sample.size()) - 1];
}

MetricsReport compute_metrics(const RunResult& run, const std::vector<Transaction>& txns, const Placement& placement,
                              const SimConfig& config) {
  MetricsReport r;
  r.mechanism = to_string(run.mechanism);
  r.n_shards = config.n_shards;
  r.seed = config.seed;
  r.ordering = config.ordering.to_string();
  r.n_txns = txns.size();
  r.rounds = run.rounds;
  r.event_digest = run.event_digest;
  r.drained = run.drained;
  r.violations = run.violations;

  std::vector<double> latencies;
  double first_issue = std::numeric_limits<double>::infinity();
  double last_commit = 0.0;
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> by_calls;  // calls -> (aborted, total)
  std::size_t attempts = 0;
  for (const auto& o : run.txns) {
    first_issue = std::min(first_issue, o.issue_time);
    auto& bucket = by_calls[o.call_count];
    ++bucket.second;
    attempts += o.attempts;
    if (o.committed) {
      ++r.confirmed;
      latencies.push_back(o.commit_time - o.issue_time);
      last_commit = std::max(last_commit, o.commit_time);
    }
    if (o.aborted) {
      ++r.aborted;
      ++bucket.first;
    }
  }
  const double span_s = (last_commit - first_issue) / 1000.0;
  r.throughput_tps = r.confirmed > 0 && span_s > 0.0 ? static_cast<double>(r.confirmed) / span_s : 0.0;
  if (!latencies.empty()) {
    r.latency.mean_ms = std::accumulate(latencies.begin(), latencies.end(), 0.0) / static_cast<double>(latencies.size());
    r.latency.p50_ms = percentile(latencies, 0.50);
    r.latency.p95_ms = percentile(latencies, 0.95);
  }
  const auto n = static_cast<double>(std::max<std::size_t>(run.txns.size(), 1));
  r.abort_ratio = static_cast<double>(r.aborted) / n;
  r.mean_retries = static_cast<double>(run.retries) / n;
  if (run.sequenced > 0) {
    r.invalid_ratio = static_cast<double>(run.invalid) / static_cast<double>(run.sequenced);
    r.cascade_ratio = static_cast<double>(run.cascaded) / static_cast<double>(run.sequenced);
  }
  if (run.candidates > 0) r.conflict_ratio = static_cast<double>(run.rejected) / static_cast<double>(run.candidates);
  for (const auto& [calls, counts] : by_calls) {
    r.abort_ratio_by_calls[calls] = static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  double bytes = 0.0;
  for (const auto& t : txns) bytes += static_cast<double>(cross_shard_bytes(t, placement));
  r.mean_cross_shard_bytes = txns.empty() ? 0.0 : bytes / static_cast<double>(txns.size());
  return r;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "row_type",       "mechanism",       "n_shards",      "seed",           "ordering",       "round",
      "trigger_ms",     "candidates",      "admitted",      "rejected",       "invalid",        "cascaded",
      "confirmed",      "throughput_tps",  "latency_mean_ms", "latency_p50_ms", "latency_p95_ms", "abort_ratio",
      "invalid_ratio",  "conflict_ratio",  "mean_cross_shard_bytes"};
  return cols;
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

void csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
  out << '\n';
}

json round_to_json(const RoundStats& s) {
  return {{"round", s.round},       {"trigger_ms", s.trigger_time},
          {"candidates", s.candidates}, {"admitted", s.admitted},
          {"rejected", s.rejected}, {"capacity_deferred", s.capacity_deferred},
          {"invalid", s.invalid},   {"cascaded", s.cascaded},
          {"confirmed", s.confirmed}};
}

RoundStats round_from_json(const json& j) {
  RoundStats s;
  s.round = j.at("round").get<Round>();
  s.trigger_time = j.at("trigger_ms").get<double>();
  s.candidates = j.at("candidates").get<std::size_t>();
  s.admitted = j.at("admitted").get<std::size_t>();
  s.rejected = j.at("rejected").get<std::size_t>();
  s.capacity_deferred = j.at("capacity_deferred").get<std::size_t>();
  s.invalid = j.at("invalid").get<std::size_t>();
  s.cascaded = j.at("cascaded").get<std::size_t>();
  s.confirmed = j.at("confirmed").get<std::size_t>();
  return s;
}

json report_to_json(const MetricsReport& r) {
  json by_calls = json::array();
  for (const auto& [calls, ratio] : r.abort_ratio_by_calls) by_calls.push_back({calls, ratio});
  json rounds = json::array();
  for (const auto& s : r.rounds) rounds.push_back(round_to_json(s));
  return {{"mechanism", r.mechanism},
          {"n_shards", r.n_shards},
          {"seed", r.seed},
          {"ordering", r.ordering},
          {"n_txns", r.n_txns},
          {"confirmed", r.confirmed},
          {"aborted", r.aborted},
          {"throughput_tps", r.throughput_tps},
          {"latency_ms", {{"mean", r.latency.mean_ms}, {"p50", r.latency.p50_ms}, {"p95", r.latency.p95_ms}}},
          {"abort_ratio", r.abort_ratio},
          {"invalid_ratio", r.invalid_ratio},
          {"cascade_ratio", r.cascade_ratio},
          {"conflict_ratio", r.conflict_ratio},
          {"mean_cross_shard_bytes", r.mean_cross_shard_bytes},
          {"mean_retries", r.mean_retries},
          {"abort_ratio_by_calls", by_calls},
          {"rounds", rounds},
          {"event_digest", r.event_digest},
          {"drained", r.drained},
          {"violations", r.violations}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.mechanism = j.at("mechanism").get<std::string>();
  r.n_shards = j.at("n_shards").get<std::uint32_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ordering = j.at("ordering").get<std::string>();
  r.n_txns = j.at("n_txns").get<std::size_t>();
  r.confirmed = j.at("confirmed").get<std::size_t>();
  r.aborted = j.at("aborted").get<std::size_t>();
  r.throughput_tps = j.at("throughput_tps").get<double>();
  const auto& lat = j.at("latency_ms");
  r.latency = {lat.at("mean").get<double>(), lat.at("p50").get<double>(), lat.at("p95").get<double>()};
  r.abort_ratio = j.at("abort_ratio").get<double>();
  r.invalid_ratio = j.at("invalid_ratio").get<double>();
  r.cascade_ratio = j.at("cascade_ratio").get<double>();
  r.conflict_ratio = j.at("conflict_ratio").get<double>();
  r.mean_cross_shard_bytes = j.at("mean_cross_shard_bytes").get<double>();
  r.mean_retries = j.at("mean_retries").get<double>();
  for (const auto& pair : j.at("abort_ratio_by_calls")) {
    r.abort_ratio_by_calls[pair.at(0).get<std::size_t>()] = pair.at(1).get<double>();
  }
  for (const auto& s : j.at("rounds")) r.rounds.push_back(round_from_json(s));
  r.event_digest = j.at("event_digest").get<std::uint64_t>();
  r.drained = j.at("drained").get<bool>();
  r.violations = j.at("violations").get<std::vector<std::string>>();
  return r;
}

}  // namespace

void emit_csv(const std::vector<MetricsReport>& reports, std::ostream& out) {
  csv_row(out, csv_columns());
  for (const auto& r : reports) {
    for (const auto& s : r.rounds) {
      csv_row(out, {"round", r.mechanism, std::to_string(r.n_shards), std::to_string(r.seed), "\"" + r.ordering + "\"",
                    std::to_string(s.round), fmt(s.trigger_time), std::to_string(s.candidates),
                    std::to_string(s.admitted), std::to_string(s.rejected), std::to_string(s.invalid),
                    std::to_string(s.cascaded), std::to_string(s.confirmed), "", "", "", "", "", "", "", ""});
    }
  }
  for (const auto& r : reports) {
    csv_row(out, {"summary", r.mechanism, std::to_string(r.n_shards), std::to_string(r.seed),
                  "\"" + r.ordering + "\"", "", "", "", "", "", "", "", std::to_string(r.confirmed),
                  fmt(r.throughput_tps), fmt(r.latency.mean_ms), fmt(r.latency.p50_ms), fmt(r.latency.p95_ms),
                  fmt(r.abort_ratio), fmt(r.invalid_ratio), fmt(r.conflict_ratio), fmt(r.mean_cross_shard_bytes)});
  }
}

void emit_json(const std::vector<MetricsReport>& reports, std::ostream& out) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  out << arr.dump(2) << '\n';
}

std::vector<MetricsReport> parse_json_reports(std::istream& in) {
  std::vector<MetricsReport> out;
  try {
    const json arr = json::parse(in);
    for (const auto& j : arr) out.push_back(report_from_json(j));
  } catch (const json::exception& e) {
    throw Error(std::string("malformed report json: ") + e.what());
  }
  return out;
}

OutputFormat parse_format(const std::string& text) {
  if (text == "csv") return OutputFormat::Csv;
  if (text == "json") return OutputFormat::Json;
  throw Error("unknown output format '" + text + "' (csv|json)");
}

void write_reports(const std::string& path, const std::vector<MetricsReport>& reports, OutputFormat format) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  if (format == OutputFormat::Csv) {
    emit_csv(reports, out);
  } else {
    emit_json(reports, out);
  }
  if (!out) throw Error("error writing " + path);
}

SecurityReport security_report(std::uint64_t population, double f, double v, unsigned lambda, std::uint64_t m_lo,
                               std::uint64_t m_hi) {
  if (f < 0.0 || f > 1.0) throw Error("malicious fraction must be in [0, 1]");
  if (m_lo == 0 || m_lo > m_hi || m_hi > population) throw Error("shard size range must satisfy 1 <= lo <= hi <= n");
  SecurityReport rep;
  rep.population = population;
  rep.malicious = static_cast<std::uint64_t>(std::llround(f * static_cast<double>(population)));
  rep.threshold_v = v;
  rep.lambda = lambda;
  const double target = std::ldexp(1.0, -static_cast<int>(lambda));
  for (std::uint64_t m = m_lo; m <= m_hi; ++m) {
    SecurityRow row;
    row.shard_size = m;
    row.failure_probability = shard_failure_probability(population, m, rep.malicious, v);
    row.security_bits = row.failure_probability > 0.0 ? -std::log2(row.failure_probability)
                                                      : std::numeric_limits<double>::infinity();
    row.meets_target = row.failure_probability <= target;
    if (row.meets_target && rep.minimal_shard_size == 0) rep.minimal_shard_size = m;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace prophet
