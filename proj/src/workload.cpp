#include "prophet/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "prophet/execution.hpp"
#include "prophet/random.hpp"

namespace prophet {

CallCountDistribution::CallCountDistribution(std::vector<double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(total > 0.0)) throw Error("call-count distribution needs positive total weight");
  for (double w : weights) {
    if (w < 0.0) throw Error("call-count distribution has a negative weight");
  }
  pmf_.reserve(weights.size());
  cdf_.reserve(weights.size());
  double acc = 0.0;
  for (double w : weights) {
    pmf_.push_back(w / total);
    acc += w / total;
    cdf_.push_back(acc);
  }
  cdf_.back() = 1.0;
}

CallCountDistribution CallCountDistribution::truncated_geometric(double mean, std::size_t max_calls) {
  if (mean < 0.0 || mean >= static_cast<double>(max_calls)) throw Error("geometric mean out of range");
  auto weights_for = [&](double q) {
    std::vector<double> w(max_calls + 1);
    double x = 1.0;
    for (auto& v : w) {
      v = x;
      x *= q;
    }
    return w;
  };
  auto mean_for = [&](double q) {
    auto w = weights_for(q);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      num += static_cast<double>(k) * w[k];
      den += w[k];
    }
    return num / den;
  };
  // mean_for is increasing in q; q > 1 puts the mass on the tail.
  double lo = 1e-9, hi = 50.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mean_for(mid) < mean ? lo : hi) = mid;
  }
  return CallCountDistribution(weights_for(0.5 * (lo + hi)));
}

CallCountDistribution CallCountDistribution::point_mass(std::size_t calls) {
  std::vector<double> w(calls + 1, 0.0);
  w[calls] = 1.0;
  return CallCountDistribution(std::move(w));
}

CallCountDistribution CallCountDistribution::ethereum_like() { return truncated_geometric(8.94, 32); }

double CallCountDistribution::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < pmf_.size(); ++k) m += static_cast<double>(k) * pmf_[k];
  return m;
}

double CallCountDistribution::tail_above(std::size_t k) const {
  if (k + 1 >= pmf_.size()) return 0.0;
  return 1.0 - cdf_[k];
}

WorkloadParams WorkloadParams::conflict_heavy() {
  WorkloadParams p;
  p.hotness_skew = 0.7;
  return p;
}

WorkloadParams WorkloadParams::uniform() {
  WorkloadParams p;
  p.hotness_skew = 0.0;
  return p;
}

namespace {

std::uint32_t draw_bytes(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double lo = std::max(1.0, 0.5 * mean);
  const double hi = 2.0 * mean - lo;
  return static_cast<std::uint32_t>(std::lround(rng.uniform(lo, hi)));
}

}  // namespace

std::vector<Transaction> generate(const WorkloadParams& params) {
  if (params.n_contracts == 0) throw Error("workload needs at least one contract");
  if (params.n_txns == 0) throw Error("workload needs at least one transaction");
  if (params.slots_per_contract == 0) throw Error("contracts need at least one storage slot");
  if (params.call_counts.pmf().empty()) throw Error("call-count distribution is empty");

  std::vector<double> zipf_cdf(params.n_contracts);
  double acc = 0.0;
  for (std::size_t i = 0; i < params.n_contracts; ++i) {
    acc += 1.0 / std::pow(static_cast<double>(i + 1), params.hotness_skew);
    zipf_cdf[i] = acc;
  }

  Rng rng(mix(params.rng_seed, 0x776f726b6c6f6164ULL));
  auto pick_contract = [&] { return static_cast<ContractId>(rng.from_cdf(zipf_cdf)); };
  auto pick_slot = [&] { return static_cast<std::uint32_t>(rng.below(params.slots_per_contract)); };

  auto emit_segment = [&](std::vector<Step>& trace, ContractId c) {
    const int reads = 1 + static_cast<int>(rng.below(2));
    for (int r = 0; r < reads; ++r) trace.emplace_back(ReadStep{StorageKey{c, pick_slot()}});
    trace.emplace_back(ComputeStep{params.mean_compute_ms * rng.uniform(0.5, 1.5)});
    if (rng.bernoulli(params.write_probability)) trace.emplace_back(WriteStep{StorageKey{c, pick_slot()}});
  };

  std::vector<Transaction> out;
  out.reserve(params.n_txns);
  double clock = 0.0;
  for (std::size_t t = 0; t < params.n_txns; ++t) {
    Transaction txn;
    txn.id = t + 1;
    if (params.arrival_tps > 0.0) clock += rng.exponential(params.arrival_tps / 1000.0);
    txn.issue_time = clock;
    txn.fee = 1 + rng.below(100);

    const std::size_t calls = rng.from_cdf(params.call_counts.cdf());
    ContractId current = pick_contract();
    emit_segment(txn.trace, current);
    for (std::size_t k = 0; k < calls; ++k) {
      ContractId target = pick_contract();
      for (int tries = 0; target == current && params.n_contracts > 1 && tries < 64; ++tries) target = pick_contract();
      if (target == current && params.n_contracts > 1) target = static_cast<ContractId>((current + 1) % params.n_contracts);
      txn.trace.emplace_back(
          CallStep{target, draw_bytes(rng, params.mean_payload_bytes), draw_bytes(rng, params.mean_return_bytes)});
      current = target;
      emit_segment(txn.trace, current);
    }
    out.push_back(std::move(txn));
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_step(const Step& step) {
  if (auto* r = std::get_if<ReadStep>(&step)) {
    return "R(" + std::to_string(r->key.contract) + "," + std::to_string(r->key.slot) + ")";
  }
  if (auto* w = std::get_if<WriteStep>(&step)) {
    return "W(" + std::to_string(w->key.contract) + "," + std::to_string(w->key.slot) + ")";
  }
  if (auto* x = std::get_if<ComputeStep>(&step)) return "X(" + format_double(x->cost_ms) + ")";
  const auto& c = std::get<CallStep>(step);
  return "C(" + std::to_string(c.target) + "," + std::to_string(c.payload_bytes) + "," +
         std::to_string(c.return_bytes) + ")";
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw Error("trace line " + std::to_string(line) + ": " + what);
}

template <class T>
T parse_number(std::string_view s, std::size_t line, const char* what) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(line, std::string("bad ") + what + " '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split_args(std::string_view inner) {
  std::vector<std::string_view> args;
  std::size_t start = 0;
  while (true) {
    auto comma = inner.find(',', start);
    args.push_back(inner.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return args;
}

Step parse_step(std::string_view tok, std::size_t line) {
  if (tok.size() < 4 || tok[1] != '(' || tok.back() != ')') fail(line, "malformed step '" + std::string(tok) + "'");
  const auto args = split_args(tok.substr(2, tok.size() - 3));
  switch (tok[0]) {
    case 'R':
    case 'W': {
      if (args.size() != 2) fail(line, "storage step needs (contract,slot)");
      StorageKey key{parse_number<ContractId>(args[0], line, "contract"), parse_number<std::uint32_t>(args[1], line, "slot")};
      if (key.slot == kWholeContract) fail(line, "slot out of range");
      if (tok[0] == 'R') return ReadStep{key};
      return WriteStep{key};
    }
    case 'X': {
      if (args.size() != 1) fail(line, "compute step needs (cost_ms)");
      const double cost = parse_number<double>(args[0], line, "cost");
      if (!(cost >= 0.0)) fail(line, "negative compute cost");
      return ComputeStep{cost};
    }
    case 'C': {
      if (args.size() != 3) fail(line, "call step needs (contract,bytes,retbytes)");
      return CallStep{parse_number<ContractId>(args[0], line, "contract"), parse_number<std::uint32_t>(args[1], line, "bytes"),
                      parse_number<std::uint32_t>(args[2], line, "retbytes")};
    }
    default:
      fail(line, "unknown step kind '" + std::string(1, tok[0]) + "'");
  }
}

}  // namespace

void save_trace(const std::string& path, const std::vector<Transaction>& txns, std::size_t n_contracts) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  if (n_contracts > 0) out << "@contracts " << n_contracts << "\n";
  for (const auto& txn : txns) {
    out << txn.id << ' ' << format_double(txn.issue_time) << ' ' << txn.fee;
    for (const auto& step : txn.trace) out << ' ' << format_step(step);
    out << '\n';
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

std::vector<Transaction> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace '" + path + "'");
  std::vector<Transaction> out;
  std::optional<std::size_t> declared;
  std::set<TxnId> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view text = raw;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    std::istringstream fields{std::string(text)};
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty()) continue;
    if (tokens[0] == "@contracts") {
      if (tokens.size() != 2) fail(line, "@contracts takes one count");
      declared = parse_number<std::size_t>(tokens[1], line, "contract count");
      continue;
    }
    if (tokens.size() < 4) fail(line, "expected txn_id issue_time fee and at least one step");
    Transaction txn;
    txn.id = parse_number<TxnId>(tokens[0], line, "txn_id");
    txn.issue_time = parse_number<double>(tokens[1], line, "issue_time");
    txn.fee = parse_number<std::uint64_t>(tokens[2], line, "fee");
    if (!seen.insert(txn.id).second) fail(line, "duplicate txn_id " + tokens[0]);
    for (std::size_t i = 3; i < tokens.size(); ++i) txn.trace.push_back(parse_step(tokens[i], line));
    if (declared) {
      for (const auto& step : txn.trace) {
        ContractId c = 0;
        if (auto* r = std::get_if<ReadStep>(&step)) c = r->key.contract;
        else if (auto* w = std::get_if<WriteStep>(&step)) c = w->key.contract;
        else if (auto* call = std::get_if<CallStep>(&step)) c = call->target;
        else continue;
        if (c >= *declared) fail(line, "unknown contract " + std::to_string(c));
      }
    }
    try {
      (void)txn.entry_contract();
    } catch (const Error&) {
      fail(line, "transaction references no contract");
    }
    out.push_back(std::move(txn));
  }
  return out;
}

std::vector<ContractId> contract_ids(std::size_t n_contracts) {
  std::vector<ContractId> ids(n_contracts);
  std::iota(ids.begin(), ids.end(), ContractId{0});
  return ids;
}

std::vector<ContractId> referenced_contracts(const std::vector<Transaction>& txns) {
  std::set<ContractId> ids;
  for (const auto& txn : txns) {
    for (const auto& step : txn.trace) {
      if (auto* r = std::get_if<ReadStep>(&step)) ids.insert(r->key.contract);
      else if (auto* w = std::get_if<WriteStep>(&step)) ids.insert(w->key.contract);
      else if (auto* c = std::get_if<CallStep>(&step)) ids.insert(c->target);
    }
  }
  return {ids.begin(), ids.end()};
}

Placement place_contracts(const std::vector<ContractId>& contracts, std::uint32_t n_shards, std::uint64_t seed) {
  if (n_shards == 0) throw Error("placement needs at least one shard");
  std::vector<std::pair<std::uint64_t, ContractId>> ranked;
  ranked.reserve(contracts.size());
  for (ContractId c : contracts) ranked.emplace_back(mix(seed ^ 0x706c6163ULL, c), c);
  std::sort(ranked.begin(), ranked.end());
  std::unordered_map<ContractId, ShardId> map;
  const std::uint64_t n = ranked.size();
  for (std::uint64_t rank = 0; rank < n; ++rank) {
    map[ranked[rank].second] = static_cast<ShardId>(rank * n_shards / n);
  }
  return Placement(std::move(map), n_shards);
}

std::uint64_t cross_shard_bytes(const Transaction& txn, const Placement& placement) {
  std::uint64_t total = 0;
  for (const auto& m : plan_segments(txn, placement).messages) total += m.payload_bytes + m.return_bytes;
  return total;
}

}  // namespace prophet
