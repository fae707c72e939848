#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prophet/experiment.hpp"
#include "prophet/metrics.hpp"
#include "prophet/workload.hpp"

using namespace prophet;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> mechanism;
  std::optional<std::uint32_t> shards;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ordering;
  std::optional<std::size_t> txns;
  std::vector<std::string> settings;  // extra key=value pairs
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "key = value config file");
  cmd->add_option("--mechanism", o.mechanism, "prophet|occ|2pl");
  cmd->add_option("--shards", o.shards, "number of shards");
  cmd->add_option("--seed", o.seed, "seed for workload and simulation");
  cmd->add_option("--ordering", o.ordering, "contract|state|rwdep[,reorder]");
  cmd->add_option("--txns", o.txns, "number of generated transactions");
  cmd->add_option("--set", o.settings, "extra key=value setting (repeatable)");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.mechanism) apply_setting(cfg, "mechanism", *o.mechanism);
  if (o.shards) cfg.sim.n_shards = *o.shards;
  if (o.seed) apply_setting(cfg, "seed", std::to_string(*o.seed));
  if (o.ordering) apply_setting(cfg, "ordering", *o.ordering);
  if (o.txns) cfg.workload.n_txns = *o.txns;
  for (const auto& kv : o.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void print_summary(const MetricsReport& r) {
  std::fprintf(stderr,
               "%-7s shards=%-3u seed=%-3llu confirmed=%zu/%zu tps=%.1f latency mean=%.0fms p95=%.0fms "
               "abort=%.4f invalid=%.4f conflict=%.4f bytes=%.1f\n",
               r.mechanism.c_str(), r.n_shards, static_cast<unsigned long long>(r.seed), r.confirmed, r.n_txns,
               r.throughput_tps, r.latency.mean_ms, r.latency.p95_ms, r.abort_ratio, r.invalid_ratio,
               r.conflict_ratio, r.mean_cross_shard_bytes);
}

int report_violations(const std::vector<MetricsReport>& reports) {
  int bad = 0;
  for (const auto& r : reports) {
    for (const auto& v : r.violations) {
      std::cerr << "invariant violation (" << r.mechanism << ", shards=" << r.n_shards << ", seed=" << r.seed
                << "): " << v << '\n';
      bad = 1;
    }
  }
  return bad ? 2 : 0;
}

template <class T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find(',', start);
    const std::string part = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!part.empty()) {
      if constexpr (std::is_same_v<T, std::string>) {
        out.push_back(part);
      } else {
        out.push_back(static_cast<T>(std::stoull(part)));
      }
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sharded-blockchain ordering simulator"};
  app.require_subcommand(1);

  Overrides run_opts;
  std::string out_path, format = "csv";
  auto* run = app.add_subcommand("run", "run one experiment");
  add_overrides(run, run_opts);
  run->add_option("--out", out_path, "output file (stdout summary only if omitted)");
  run->add_option("--format", format, "csv|json")->check(CLI::IsMember({"csv", "json"}));

  Overrides sweep_opts;
  std::string sweep_shards = "2,4,8,16", sweep_seeds = "1,2,3", sweep_mechs = "prophet,occ,2pl";
  std::string sweep_out, sweep_format = "csv";
  bool serial = false;
  auto* sweep = app.add_subcommand("sweep", "run a grid of experiments");
  add_overrides(sweep, sweep_opts);
  sweep->add_option("--shard-list", sweep_shards, "comma-separated shard counts");
  sweep->add_option("--seed-list", sweep_seeds, "comma-separated seeds");
  sweep->add_option("--mechanisms", sweep_mechs, "comma-separated mechanisms");
  sweep->add_option("--out", sweep_out, "output file");
  sweep->add_option("--format", sweep_format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
  sweep->add_flag("--serial", serial, "use the serial reference sweep");

  std::uint64_t population = 800, m_lo = 1, m_hi = 400;
  double fraction = 0.125, threshold = 1.0 / 3.0;
  unsigned lambda = 17;
  auto* sec = app.add_subcommand("security", "shard failure probability table");
  sec->add_option("--population", population, "total nodes");
  sec->add_option("--fraction", fraction, "malicious fraction");
  sec->add_option("--threshold", threshold, "fault threshold v");
  sec->add_option("--lambda", lambda, "security parameter");
  sec->add_option("--min-size", m_lo, "smallest shard size");
  sec->add_option("--max-size", m_hi, "largest shard size");

  Overrides gen_opts;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-trace", "write the configured synthetic workload as a trace file");
  add_overrides(gen, gen_opts);
  gen->add_option("--out", gen_out, "trace path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const ExperimentConfig cfg = resolve(run_opts);
      const ExperimentOutput res = run_experiment(cfg);
      print_summary(res.report);
      if (!out_path.empty()) write_reports(out_path, {res.report}, parse_format(format));
      return report_violations({res.report});
    }
    if (sweep->parsed()) {
      const ExperimentConfig base = resolve(sweep_opts);
      std::vector<ExperimentConfig> points;
      for (const auto& mech : parse_list<std::string>(sweep_mechs)) {
        for (auto shards : parse_list<std::uint32_t>(sweep_shards)) {
          for (auto seed : parse_list<std::uint64_t>(sweep_seeds)) {
            ExperimentConfig p = base;
            apply_setting(p, "mechanism", mech);
            p.sim.n_shards = shards;
            apply_setting(p, "seed", std::to_string(seed));
            points.push_back(p);
          }
        }
      }
      const auto reports = serial ? run_sweep_serial(points) : run_sweep_parallel(points);
      for (const auto& r : reports) print_summary(r);
      if (!sweep_out.empty()) write_reports(sweep_out, reports, parse_format(sweep_format));
      return report_violations(reports);
    }
    if (sec->parsed()) {
      const SecurityReport rep = security_report(population, fraction, threshold, lambda, m_lo, m_hi);
      std::printf("shard_size,failure_probability,security_bits,meets_2^-%u\n", lambda);
      for (const auto& row : rep.rows) {
        std::printf("%llu,%.6e,%.3f,%d\n", static_cast<unsigned long long>(row.shard_size), row.failure_probability,
                    row.security_bits, row.meets_target ? 1 : 0);
      }
      if (rep.minimal_shard_size) {
        std::fprintf(stderr, "minimal shard size for 2^-%u: %llu\n", lambda,
                     static_cast<unsigned long long>(rep.minimal_shard_size));
      } else {
        std::fprintf(stderr, "no shard size in range reaches 2^-%u\n", lambda);
      }
      return 0;
    }
    if (gen->parsed()) {
      const ExperimentConfig cfg = resolve(gen_opts);
      save_trace(gen_out, generate(cfg.workload), cfg.workload.n_contracts);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
