#include "prophet/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "prophet/baselines.hpp"
#include "prophet/execution.hpp"
#include "prophet/oracle.hpp"
#include "prophet/prophet_sim.hpp"
#include "prophet/sequencer.hpp"

namespace prophet {

Mechanism parse_mechanism(const std::string& text) {
  if (text == "prophet") return Mechanism::Prophet;
  if (text == "occ") return Mechanism::OCC;
  if (text == "2pl") return Mechanism::TwoPL;
  throw Error("unknown mechanism '" + text + "' (prophet|occ|2pl)");
}

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::Prophet:
      return "prophet";
    case Mechanism::OCC:
      return "occ";
    case Mechanism::TwoPL:
      return "2pl";
  }
  return "?";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw Error("bad value '" + value + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw Error("bad value '" + value + "' for key '" + key + "' (true|false)");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

ConsensusLatencyModel parse_consensus(const std::string& key, const std::string& value) {
  const auto parts = split(value, ':');
  ConsensusLatencyModel m;
  if (parts.size() == 2 && parts[0] == "fixed") {
    m.kind = ConsensusLatencyModel::Kind::Fixed;
    m.fixed_ms = parse_number<double>(key, parts[1]);
    return m;
  }
  if (parts.size() == 3 && parts[0] == "lognormal") {
    m.kind = ConsensusLatencyModel::Kind::LogNormal;
    m.median_ms = parse_number<double>(key, parts[1]);
    m.sigma = parse_number<double>(key, parts[2]);
    return m;
  }
  throw Error("bad value '" + value + "' for key '" + key + "' (fixed:<ms> | lognormal:<median>:<sigma>)");
}

template <class F>
auto rethrow_for(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    const std::string what = e.what();
    if (what.find("'" + key + "'") != std::string::npos) throw;
    throw Error("key '" + key + "': " + what);
  }
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;
  static const std::unordered_map<std::string, Setter> setters = {
      {"mechanism", [](auto& c, auto& k, auto& v) { c.mechanism = rethrow_for(k, [&] { return parse_mechanism(v); }); }},
      {"workload",
       [](auto& c, auto& k, auto& v) {
         if (v == "conflict_heavy") {
           c.workload = WorkloadParams::conflict_heavy();
         } else if (v == "uniform") {
           c.workload = WorkloadParams::uniform();
         } else {
           throw Error("bad value '" + v + "' for key '" + k + "' (conflict_heavy|uniform)");
         }
       }},
      {"trace", [](auto& c, auto&, auto& v) { c.trace_path = v; }},
      {"verify", [](auto& c, auto& k, auto& v) { c.verify = parse_bool(k, v); }},
      {"placement_seed", [](auto& c, auto& k, auto& v) { c.placement_seed = parse_number<std::uint64_t>(k, v); }},
      {"seed",
       [](auto& c, auto& k, auto& v) {
         c.sim.seed = parse_number<std::uint64_t>(k, v);
         c.workload.rng_seed = c.sim.seed;
       }},
      {"workload_seed", [](auto& c, auto& k, auto& v) { c.workload.rng_seed = parse_number<std::uint64_t>(k, v); }},
      {"txns", [](auto& c, auto& k, auto& v) { c.workload.n_txns = parse_number<std::size_t>(k, v); }},
      {"contracts", [](auto& c, auto& k, auto& v) { c.workload.n_contracts = parse_number<std::size_t>(k, v); }},
      {"call_mean",
       [](auto& c, auto& k, auto& v) {
         c.workload.call_counts = CallCountDistribution::truncated_geometric(parse_number<double>(k, v), 32);
       }},
      {"calls", [](auto& c, auto& k, auto& v) {
         c.workload.call_counts = CallCountDistribution::point_mass(parse_number<std::size_t>(k, v));
       }},
      {"skew", [](auto& c, auto& k, auto& v) { c.workload.hotness_skew = parse_number<double>(k, v); }},
      {"slots", [](auto& c, auto& k, auto& v) { c.workload.slots_per_contract = parse_number<std::uint32_t>(k, v); }},
      {"compute_ms", [](auto& c, auto& k, auto& v) { c.workload.mean_compute_ms = parse_number<double>(k, v); }},
      {"payload_bytes", [](auto& c, auto& k, auto& v) { c.workload.mean_payload_bytes = parse_number<double>(k, v); }},
      {"return_bytes", [](auto& c, auto& k, auto& v) { c.workload.mean_return_bytes = parse_number<double>(k, v); }},
      {"write_probability",
       [](auto& c, auto& k, auto& v) { c.workload.write_probability = parse_number<double>(k, v); }},
      {"arrival_tps", [](auto& c, auto& k, auto& v) { c.workload.arrival_tps = parse_number<double>(k, v); }},
      {"shards", [](auto& c, auto& k, auto& v) { c.sim.n_shards = parse_number<std::uint32_t>(k, v); }},
      {"nodes_per_shard", [](auto& c, auto& k, auto& v) { c.sim.nodes_per_shard = parse_number<std::uint32_t>(k, v); }},
      {"link_latency_ms", [](auto& c, auto& k, auto& v) { c.sim.link_latency_ms = parse_number<double>(k, v); }},
      {"link_bandwidth_mbps",
       [](auto& c, auto& k, auto& v) { c.sim.link_bandwidth_mbps = parse_number<double>(k, v); }},
      {"consensus", [](auto& c, auto& k, auto& v) { c.sim.consensus = parse_consensus(k, v); }},
      {"fault_threshold",
       [](auto& c, auto& k, auto& v) {
         if (v == "1/3") {
           c.sim.fault_threshold_v = 1.0 / 3.0;
         } else if (v == "1/2") {
           c.sim.fault_threshold_v = 0.5;
         } else {
           c.sim.fault_threshold_v = parse_number<double>(k, v);
         }
       }},
      {"malicious_fraction",
       [](auto& c, auto& k, auto& v) { c.sim.malicious_fraction = parse_number<double>(k, v); }},
      {"security_lambda", [](auto& c, auto& k, auto& v) { c.sim.security_lambda = parse_number<unsigned>(k, v); }},
      {"coalitions", [](auto& c, auto& k, auto& v) { c.sim.n_coalitions = parse_number<std::uint32_t>(k, v); }},
      {"coop_mode",
       [](auto& c, auto& k, auto& v) { c.sim.coop_mode = rethrow_for(k, [&] { return CooperationMode::parse(v); }); }},
      {"coalition_latency_ms",
       [](auto& c, auto& k, auto& v) { c.sim.coalition_latency_ms = parse_number<double>(k, v); }},
      {"coalition_batch", [](auto& c, auto& k, auto& v) { c.sim.coalition_batch = parse_number<std::size_t>(k, v); }},
      {"churn", [](auto& c, auto& k, auto& v) { c.sim.churn_enabled = parse_bool(k, v); }},
      {"ordering",
       [](auto& c, auto& k, auto& v) { c.sim.ordering = rethrow_for(k, [&] { return OrderingRule::parse(v); }); }},
      {"sequence_threshold",
       [](auto& c, auto& k, auto& v) { c.sim.sequence_threshold = parse_number<std::size_t>(k, v); }},
      {"block_capacity", [](auto& c, auto& k, auto& v) { c.sim.block_capacity = parse_number<std::size_t>(k, v); }},
      {"max_deferral", [](auto& c, auto& k, auto& v) { c.sim.max_deferral = parse_number<std::uint32_t>(k, v); }},
      {"epoch_rounds", [](auto& c, auto& k, auto& v) { c.sim.epoch_rounds = parse_number<std::uint32_t>(k, v); }},
      {"dispatch",
       [](auto& c, auto& k, auto& v) {
         if (v == "pipelined") {
           c.sim.dispatch = DispatchMode::Pipelined;
         } else if (v == "serial") {
           c.sim.dispatch = DispatchMode::Serial;
         } else {
           throw Error("bad value '" + v + "' for key '" + k + "' (pipelined|serial)");
         }
       }},
      {"requeue_invalidated", [](auto& c, auto& k, auto& v) { c.sim.requeue_invalidated = parse_bool(k, v); }},
      {"byzantine_leader", [](auto& c, auto& k, auto& v) { c.sim.byzantine_leader = parse_bool(k, v); }},
      {"shard_slowdown",
       [](auto& c, auto& k, auto& v) {
         c.sim.shard_slowdown.clear();
         for (const auto& part : split(v, ',')) c.sim.shard_slowdown.push_back(parse_number<double>(k, part));
       }},
      {"max_retry", [](auto& c, auto& k, auto& v) { c.sim.max_retry = parse_number<std::uint32_t>(k, v); }},
      {"drain_limit_ms", [](auto& c, auto& k, auto& v) { c.sim.drain_limit_ms = parse_number<double>(k, v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw Error("unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

ExperimentConfig parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> settings;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("line " + std::to_string(lineno) + ": expected key = value");
    settings.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  ExperimentConfig cfg;
  std::stable_partition(settings.begin(), settings.end(), [](const auto& kv) { return kv.first == "workload"; });
  for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  return parse_config(in);
}

Scenario build_scenario(const ExperimentConfig& cfg) {
  Scenario sc;
  std::vector<ContractId> contracts;
  if (!cfg.trace_path.empty()) {
    sc.txns = load_trace(cfg.trace_path);
    contracts = referenced_contracts(sc.txns);
  } else {
    sc.txns = generate(cfg.workload);
    contracts = contract_ids(cfg.workload.n_contracts);
  }
  sc.placement = place_contracts(contracts, cfg.sim.n_shards, cfg.placement_seed);
  return sc;
}

RunResult run_mechanism(const Scenario& scenario, const ExperimentConfig& cfg) {
  switch (cfg.mechanism) {
    case Mechanism::Prophet:
      return run_prophet(scenario.txns, scenario.placement, cfg.sim);
    case Mechanism::OCC:
      return run_occ(scenario.txns, scenario.placement, cfg.sim);
    case Mechanism::TwoPL:
      return run_2pl(scenario.txns, scenario.placement, cfg.sim);
  }
  throw Error("unknown mechanism");
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  const Scenario sc = build_scenario(cfg);
  ExperimentOutput out;
  out.run = run_mechanism(sc, cfg);
  if (cfg.verify) {
    std::unordered_map<TxnId, std::size_t> index;
    for (std::size_t i = 0; i < sc.txns.size(); ++i) index.emplace(sc.txns[i].id, i);
    const TxnLookup lookup = [&](TxnId id) -> const Transaction& { return sc.txns[index.at(id)]; };
    if (!check_serializable(out.run.history, lookup, sc.placement, out.run.final_state)) {
      out.run.violations.push_back("committed history is not serializable");
    }
  }
  out.report = compute_metrics(out.run, sc.txns, sc.placement, cfg.sim);
  return out;
}

std::vector<MetricsReport> run_sweep_serial(const std::vector<ExperimentConfig>& points) {
  std::vector<MetricsReport> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(run_experiment(p).report);
  return out;
}

std::vector<MetricsReport> run_sweep_parallel(const std::vector<ExperimentConfig>& points) {
  std::vector<MetricsReport> out(points.size());
  std::vector<std::string> errors(points.size());
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = run_experiment(points[static_cast<std::size_t>(i)]).report;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
  return out;
}

double batch_conflict_ratio(std::span<const Transaction> batch, const Placement& placement, const OrderingRule& rule) {
  if (batch.empty()) return 0.0;
  const StateReader genesis = [](const StorageKey& k) { return genesis_value(k); };
  std::vector<Candidate> cands;
  cands.reserve(batch.size());
  for (const auto& t : batch) {
    cands.push_back({&t, make_profile(t, execute(t, placement, genesis), Granularity::StateLevel, 0, 0), 0});
  }
  const OrderResult res = build_order(cands, rule, 1);
  return static_cast<double>(res.rejected.size()) / static_cast<double>(batch.size());
}

}  // namespace prophet
