// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "prophet/experiment.hpp"
#include "prophet/oracle.hpp"
#include "prophet/preexec.hpp"

using namespace prophet;

namespace {

int failures = 0;

void verdict(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double mean(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// ---- main sweep ----

const std::vector<std::uint32_t> kShards = {2, 4, 8, 16};
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};
const std::vector<std::string> kWorkloads = {"conflict_heavy", "uniform"};
const std::vector<Mechanism> kMechs = {Mechanism::Prophet, Mechanism::OCC, Mechanism::TwoPL};

struct Point {
  Mechanism mech;
  std::string workload;
  std::uint32_t shards;
  std::uint64_t seed;
};

struct Outcome {
  MetricsReport report;
  bool serializable = false;
  bool matches_oracle = true;  // Prophet only
  std::uint64_t digest = 0;
};

ExperimentConfig config_for(const Point& p) {
  ExperimentConfig cfg;
  apply_setting(cfg, "workload", p.workload);
  apply_setting(cfg, "mechanism", to_string(p.mech));
  apply_setting(cfg, "seed", std::to_string(p.seed));
  cfg.sim.n_shards = p.shards;
  cfg.verify = false;  // checked here explicitly
  return cfg;
}

Outcome evaluate(const ExperimentConfig& cfg) {
  const Scenario sc = build_scenario(cfg);
  const RunResult run = run_mechanism(sc, cfg);
  std::unordered_map<TxnId, std::size_t> index;
  for (std::size_t i = 0; i < sc.txns.size(); ++i) index.emplace(sc.txns[i].id, i);
  const TxnLookup lookup = [&](TxnId id) -> const Transaction& { return sc.txns[index.at(id)]; };

  Outcome out;
  out.report = compute_metrics(run, sc.txns, sc.placement, cfg.sim);
  out.serializable = check_serializable(run.history, lookup, sc.placement, run.final_state);
  out.digest = run.event_digest;
  if (cfg.mechanism == Mechanism::Prophet) {
    std::vector<const Transaction*> order;
    for (const auto& h : run.history) order.push_back(&lookup(h.txn_id));
    out.matches_oracle = ideal_execute(order, sc.placement).final_state == run.final_state;
  }
  return out;
}

struct Sweep {
  std::vector<Point> points;
  std::vector<Outcome> outcomes;
  double seconds = 0.0;

  std::vector<const Outcome*> select(Mechanism m, const std::string& wl, std::uint32_t shards) const {
    std::vector<const Outcome*> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      if (p.mech == m && p.workload == wl && p.shards == shards) out.push_back(&outcomes[i]);
    }
    return out;
  }

  template <class F>
  double avg(Mechanism m, const std::string& wl, std::uint32_t shards, F field) const {
    std::vector<double> xs;
    for (const auto* o : select(m, wl, shards)) xs.push_back(field(o->report));
    return mean(xs);
  }
};

Sweep main_sweep() {
  Sweep s;
  for (auto m : kMechs) {
    for (const auto& wl : kWorkloads) {
      for (auto shards : kShards) {
        for (auto seed : kSeeds) s.points.push_back({m, wl, shards, seed});
      }
    }
  }
  s.outcomes.resize(s.points.size());
  std::vector<std::string> errors(s.points.size());
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<std::ptrdiff_t>(s.points.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      s.outcomes[k] = evaluate(config_for(s.points[k]));
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw Error("sweep point " + std::to_string(i) + ": " + errors[i]);
  }
  return s;
}

std::string series(const Sweep& s, Mechanism m, const std::string& wl, double (*field)(const MetricsReport&),
                   const char* f) {
  std::string out = to_string(m) + "/" + wl + " [";
  for (std::size_t i = 0; i < kShards.size(); ++i) {
    out += (i ? " " : "") + fmt(f, s.avg(m, wl, kShards[i], field));
  }
  return out + "]";
}

double latency_of(const MetricsReport& r) { return r.latency.mean_ms; }
double abort_of(const MetricsReport& r) { return r.abort_ratio; }
double tps_of(const MetricsReport& r) { return r.throughput_tps; }

// ---- criteria ----

void criterion1(const Sweep& s) {
  std::size_t runs = 0, bad = 0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    if (s.points[i].mech != Mechanism::Prophet) continue;
    ++runs;
    if (s.outcomes[i].report.abort_ratio != 0.0) ++bad;
  }
  verdict(1, "zero-aborts", bad == 0 && s.seconds < 600.0,
          std::to_string(runs) + " prophet runs, " + std::to_string(bad) + " with aborts; full sweep " +
              fmt("%.1f s", s.seconds));
}

void criterion2(const Sweep& s) {
  std::size_t non_serial = 0, oracle_mismatch = 0;
  for (const auto& o : s.outcomes) {
    non_serial += o.serializable ? 0 : 1;
    oracle_mismatch += o.matches_oracle ? 0 : 1;
  }
  verdict(2, "serializability-oracle", non_serial == 0 && oracle_mismatch == 0,
          std::to_string(s.outcomes.size()) + " runs, " + std::to_string(non_serial) + " not serializable, " +
              std::to_string(oracle_mismatch) + " prophet final states differ from the oracle");
}

void criterion3() {
  bool ok = true;
  std::string detail;
  for (auto m : kMechs) {
    auto cfg = config_for({m, "conflict_heavy", 8, 11});
    apply_setting(cfg, "malicious_fraction", "0.125");
    const Scenario sc = build_scenario(cfg);
    const RunResult a = run_mechanism(sc, cfg);
    const RunResult b = run_mechanism(sc, cfg);
    bool same = a.event_digest == b.event_digest && a.event_count == b.event_count &&
                a.history.size() == b.history.size() && a.final_state == b.final_state;
    for (std::size_t i = 0; same && i < a.history.size(); ++i) {
      same = a.history[i].txn_id == b.history[i].txn_id && a.history[i].attempt == b.history[i].attempt &&
             a.history[i].commit_time == b.history[i].commit_time;
    }
    ok = ok && same;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s%s digest %016llx %s", detail.empty() ? "" : ", ", to_string(m).c_str(),
                  static_cast<unsigned long long>(a.event_digest), same ? "repeats" : "DIFFERS");
    detail += buf;
  }
  verdict(3, "determinism", ok, detail);
}

void criterion4() {
  const std::vector<std::size_t> sizes = {10, 100, 500, 1000, 3000};
  const char* rules[4] = {"contract", "state", "rwdep", "rwdep,reorder"};
  std::map<std::uint64_t, std::vector<std::vector<double>>> ratio;  // seed -> size -> rule
  for (auto seed : kSeeds) {
    ExperimentConfig cfg;
    apply_setting(cfg, "seed", std::to_string(seed));
    cfg.workload.n_txns = sizes.back();
    const Scenario sc = build_scenario(cfg);
    for (auto n : sizes) {
      std::vector<double> row;
      for (const char* r : rules) {
        row.push_back(batch_conflict_ratio(std::span(sc.txns.data(), n), sc.placement, OrderingRule::parse(r)));
      }
      ratio[seed].push_back(row);
    }
  }
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    int ordered = 0, growing = 0;
    std::vector<double> avg(4, 0.0);
    for (auto seed : kSeeds) {
      const auto& r = ratio[seed][i];
      ordered += (r[0] >= r[1] && r[1] >= r[2] && r[2] >= r[3]) ? 1 : 0;
      if (i > 0) growing += r[0] > ratio[seed][i - 1][0] ? 1 : 0;
      for (int k = 0; k < 4; ++k) avg[k] += r[k] / static_cast<double>(kSeeds.size());
    }
    ok = ok && ordered >= 2 && (i == 0 || growing >= 2);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%sn=%zu %.3f/%.3f/%.3f/%.3f", i ? "; " : "", sizes[i], avg[0], avg[1], avg[2],
                  avg[3]);
    detail += buf;
  }
  verdict(4, "conflict-ratio-ordering", ok, detail + " (contract/state/rwdep/reorder, mean of 3 seeds)");
}

std::vector<double> baseline_aborts_by_calls(Mechanism m, const std::vector<std::size_t>& calls) {
  std::vector<double> out;
  for (auto c : calls) {
    std::vector<double> xs;
    for (auto seed : kSeeds) {
      auto cfg = config_for({m, "conflict_heavy", 8, seed});
      apply_setting(cfg, "calls", std::to_string(c));
      cfg.workload.n_txns = 4000;
      xs.push_back(evaluate(cfg).report.abort_ratio);
    }
    out.push_back(mean(xs));
  }
  return out;
}

bool nondecreasing(const std::vector<double>& xs) {
  return std::is_sorted(xs.begin(), xs.end());
}

void criterion5(const Sweep& s) {
  bool ok = true;
  std::string detail;
  for (auto m : {Mechanism::OCC, Mechanism::TwoPL}) {
    std::vector<double> by_shards;
    for (auto n : kShards) by_shards.push_back(s.avg(m, "conflict_heavy", n, abort_of));
    ok = ok && nondecreasing(by_shards);
    detail += "abort by shards " + series(s, m, "conflict_heavy", abort_of, "%.3f") + "; ";

    const std::vector<std::size_t> calls = {1, 2, 4, 8};
    const auto by_calls = baseline_aborts_by_calls(m, calls);
    ok = ok && nondecreasing(by_calls);
    detail += "abort by calls 1/2/4/8 [";
    for (std::size_t i = 0; i < by_calls.size(); ++i) detail += (i ? " " : "") + fmt("%.3f", by_calls[i]);
    detail += "]; ";
  }
  for (auto n : {8u, 16u}) {
    const double p = s.avg(Mechanism::Prophet, "conflict_heavy", n, tps_of);
    const double o = s.avg(Mechanism::OCC, "conflict_heavy", n, tps_of);
    const double l = s.avg(Mechanism::TwoPL, "conflict_heavy", n, tps_of);
    ok = ok && p > o && p > l;
    char buf[128];
    std::snprintf(buf, sizeof buf, "tps at %u shards prophet %.1f occ %.1f 2pl %.1f; ", n, p, o, l);
    detail += buf;
  }
  detail.resize(detail.size() - 2);
  verdict(5, "baseline-degradation", ok, detail);
}

void criterion6(const Sweep& s) {
  bool ok = true;
  std::string detail;
  for (const auto& wl : kWorkloads) {
    std::vector<double> lat;
    for (auto n : kShards) lat.push_back(s.avg(Mechanism::Prophet, wl, n, latency_of));
    const double lo = *std::min_element(lat.begin(), lat.end());
    const double hi = *std::max_element(lat.begin(), lat.end());
    const double spread = (hi - lo) / lo;
    ok = ok && spread < 0.25;
    detail += series(s, Mechanism::Prophet, wl, latency_of, "%.0f") + " spread " + fmt("%.1f%%", 100.0 * spread) + "; ";
    for (auto m : {Mechanism::OCC, Mechanism::TwoPL}) {
      const double growth = s.avg(m, wl, 16, latency_of) / s.avg(m, wl, 2, latency_of) - 1.0;
      ok = ok && growth > 0.25;
      detail += series(s, m, wl, latency_of, "%.0f") + " growth " + fmt("%.1f%%", 100.0 * growth) + "; ";
    }
  }
  detail.resize(detail.size() - 2);
  verdict(6, "latency-flatness", ok, detail + " (mean latency ms over 2/4/8/16 shards)");
}

void criterion7() {
  ExperimentConfig cfg;
  cfg.workload.n_txns = 1000;
  cfg.sim.n_shards = 8;
  const Scenario sc = build_scenario(cfg);
  std::vector<TxnCost> costs;
  double compute = 0.0, comm = 0.0;
  for (const auto& t : sc.txns) {
    costs.push_back(txn_cost(t, sc.placement, TimingParams{cfg.sim.coalition_latency_ms, cfg.sim.link_bandwidth_mbps}));
    compute += costs.back().compute_ms;
    comm += costs.back().comm_ms;
  }
  // Rescale compute so communication is 87.5% of the batch's time.
  const double scale = comm / (7.0 * compute);
  for (auto& c : costs) c.compute_ms *= scale;
  const double seq = simulate_timing({CoopKind::Sequential, 1}, costs);
  const double ovl = simulate_timing({CoopKind::Overlap, 1}, costs);
  const double par = simulate_timing({CoopKind::Parallel, 5}, costs);
  const bool ok = ovl < seq && seq / par >= 1.8;
  char buf[160];
  std::snprintf(buf, sizeof buf, "makespan ms sequential %.1f overlap %.1f parallel(5) %.1f; speedup overlap %.2fx parallel %.2fx",
                seq, ovl, par, seq / ovl, seq / par);
  verdict(7, "preexec-speedup", ok, buf);
}

void criterion8() {
  bool ok = true;
  std::size_t corrupted = 0, corrupted_confirmed = 0, violations = 0;
  std::vector<double> early, late;
  std::size_t inv_after = 0, adm_after = 0;
  for (auto seed : kSeeds) {
    auto cfg = config_for({Mechanism::Prophet, "conflict_heavy", 8, seed});
    apply_setting(cfg, "malicious_fraction", "0.125");
    apply_setting(cfg, "nodes_per_shard", "50");
    apply_setting(cfg, "churn", "true");
    const Scenario sc = build_scenario(cfg);
    const RunResult run = run_mechanism(sc, cfg);
    corrupted += run.corrupted_profiles;
    corrupted_confirmed += run.corrupted_confirmed;
    violations += run.violations.size();
    std::size_t inv_early = 0, adm_early = 0, inv_late = 0, adm_late = 0;
    for (const auto& r : run.rounds) {
      if (r.round >= 1 && r.round <= 10) {
        inv_early += r.invalid;
        adm_early += r.admitted;
      }
      if (r.round >= 40 && r.round <= 50) {
        inv_late += r.invalid;
        adm_late += r.admitted;
      }
      if (r.round > 20) {
        inv_after += r.invalid;
        adm_after += r.admitted;
      }
    }
    if (adm_early == 0 || adm_late == 0) ok = false;
    early.push_back(adm_early ? static_cast<double>(inv_early) / static_cast<double>(adm_early) : 0.0);
    late.push_back(adm_late ? static_cast<double>(inv_late) / static_cast<double>(adm_late) : 0.0);
  }
  const double after = adm_after ? static_cast<double>(inv_after) / static_cast<double>(adm_after) : 1.0;
  ok = ok && corrupted > 0 && corrupted_confirmed == 0 && violations == 0 && mean(late) < mean(early) && after < 0.10;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%zu corrupted profiles, %zu confirmed, %zu violations; invalid ratio rounds 1-10 %.4f, 40-50 %.4f, "
                "after 20 %.4f (8 shards x 50 nodes, 12.5%% malicious, 3 seeds)",
                corrupted, corrupted_confirmed, violations, mean(early), mean(late), after);
  verdict(8, "byzantine-containment", ok, buf);
}

double exact_failure(std::uint64_t n, std::uint64_t m, std::uint64_t bad, std::uint64_t vn, std::uint64_t vd) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  auto choose = [](std::uint64_t a, std::uint64_t b) {
    cpp_int r = 1;
    if (b > a) return cpp_int(0);
    for (std::uint64_t i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return r;
  };
  cpp_int num = 0;
  for (std::uint64_t k = 0; k <= std::min(m, bad); ++k) {
    if (k * vd > vn * m) num += choose(bad, k) * choose(n - bad, m - k);
  }
  return static_cast<double>(cpp_rational(num, choose(n, m)));
}

void criterion9() {
  double worst = 0.0;
  std::size_t points = 0;
  bool monotone = true;
  std::size_t lattice_steps = 0, rises = 0;
  std::string first_rise;
  for (std::uint64_t n : {100u, 800u, 1600u}) {
    for (double f : {0.05, 0.125, 0.25}) {
      const auto bad = static_cast<std::uint64_t>(std::llround(f * static_cast<double>(n)));
      for (std::uint64_t vd : {2u, 3u}) {
        const double v = 1.0 / static_cast<double>(vd);
        for (std::uint64_t m : {1u, 2u, 5u, 10u, 17u, 30u, 50u, 80u}) {
          worst = std::max(worst, std::abs(shard_failure_probability(n, m, bad, v) - exact_failure(n, m, bad, 1, vd)));
          ++points;
        }
        // Tolerance thresholds step with floor(v*m); compare sizes where v*m is whole.
        double prev = 1.0;
        for (std::uint64_t m = vd; m <= std::min<std::uint64_t>(n, 300); m += vd) {
          const double p = shard_failure_probability(n, m, bad, v);
          if (p > prev + 1e-15) {
            if (monotone) {
              char buf[200];
              std::snprintf(buf, sizeof buf, "; rises at n=%llu f=%.3f v=1/%llu m=%llu->%llu: %.6f -> %.6f (exact %.6f -> %.6f)",
                            static_cast<unsigned long long>(n), f, static_cast<unsigned long long>(vd),
                            static_cast<unsigned long long>(m - vd), static_cast<unsigned long long>(m), prev, p,
                            exact_failure(n, m - vd, bad, 1, vd), exact_failure(n, m, bad, 1, vd));
              first_rise = buf;
            }
            monotone = false;
            ++rises;
          }
          prev = p;
          ++lattice_steps;
        }
      }
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "max abs error %.3g over %zu grid points; %zu rises over %zu shard sizes with integral v*m",
                worst, points, rises, lattice_steps);
  verdict(9, "failure-probability", worst <= 1e-12 && monotone, buf + first_rise);
}

void criterion10() {
  const std::vector<std::uint32_t> shards = {2, 4, 8, 16, 32, 64};
  std::vector<double> bytes;
  for (auto n : shards) {
    std::vector<double> xs;
    for (auto seed : kSeeds) {
      ExperimentConfig cfg;
      cfg.workload = WorkloadParams{};
      apply_setting(cfg, "seed", std::to_string(seed));
      cfg.sim.n_shards = n;
      const Scenario sc = build_scenario(cfg);
      double total = 0.0;
      for (const auto& t : sc.txns) total += static_cast<double>(cross_shard_bytes(t, sc.placement));
      xs.push_back(total / static_cast<double>(sc.txns.size()));
    }
    bytes.push_back(mean(xs));
  }
  bool ok = nondecreasing(bytes);
  for (std::size_t i = 2; i < bytes.size(); ++i) ok = ok && bytes[i] - bytes[i - 1] <= bytes[i - 1] - bytes[i - 2];
  ok = ok && std::abs(bytes.front() - 177.0) <= 0.5 * 177.0 && std::abs(bytes.back() - 322.0) <= 0.5 * 322.0;
  std::string detail = "mean bytes at 2..64 shards [";
  for (std::size_t i = 0; i < bytes.size(); ++i) detail += (i ? " " : "") + fmt("%.1f", bytes[i]);
  verdict(10, "message-size", ok, detail + "] (targets 177 and 322, +-50%)");
}

}  // namespace

int main() {
  try {
    const Sweep sweep = main_sweep();
    criterion1(sweep);
    criterion2(sweep);
    criterion3();
    criterion4();
    criterion5(sweep);
    criterion6(sweep);
    criterion7();
    criterion8();
    criterion9();
    criterion10();
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance suite aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
