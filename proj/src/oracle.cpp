#include "prophet/oracle.hpp"

#include <stdexcept>

namespace prophet {

IdealResult ideal_execute(const std::vector<const Transaction*>& order, const Placement& placement,
                          const std::map<StorageKey, Value>& genesis, Granularity granularity) {
  IdealResult out;
  std::map<StorageKey, Value> state = genesis;
  const StateReader reader = [&](const StorageKey& k) {
    auto it = state.find(k);
    return it != state.end() ? it->second : genesis_value(k);
  };
  for (const Transaction* txn : order) {
    const ExecutionRecord rec = execute(*txn, placement, reader);
    out.profiles.push_back(make_profile(*txn, rec, granularity, -1, 0));
    for (const auto& [k, v] : rec.writes) {
      state[k] = v;
      out.final_state[k] = v;
    }
  }
  for (const auto& [k, v] : genesis) out.final_state.emplace(k, v);
  return out;
}

bool check_serializable(const std::vector<CommittedTxn>& history, const TxnLookup& lookup,
                        const Placement& placement, const std::map<StorageKey, Value>& final_state) {
  std::vector<const Transaction*> order;
  order.reserve(history.size());
  for (const auto& h : history) {
    try {
      order.push_back(&lookup(h.txn_id));
    } catch (const std::out_of_range&) {
      throw Error("history references unknown transaction " + std::to_string(h.txn_id));
    }
  }
  const auto replay = ideal_execute(order, placement).final_state;
  auto value = [](const std::map<StorageKey, Value>& m, const StorageKey& k) {
    auto it = m.find(k);
    return it != m.end() ? it->second : genesis_value(k);
  };
  for (const auto& [k, v] : replay) {
    if (value(final_state, k) != v) return false;
  }
  for (const auto& [k, v] : final_state) {
    if (value(replay, k) != v) return false;
  }
  return true;
}

bool same_profile_content(const TransactionProfile& a, const TransactionProfile& b) {
  return a.txn_id == b.txn_id && a.rw_set == b.rw_set && a.messages == b.messages && a.read_values == b.read_values &&
         a.write_values == b.write_values;
}

}  // namespace prophet
