#pragma once

#include <unordered_map>
#include <vector>

#include "prophet/core.hpp"

namespace prophet::test {

inline Step R(ContractId c, std::uint32_t slot) { return ReadStep{{c, slot}}; }
inline Step W(ContractId c, std::uint32_t slot) { return WriteStep{{c, slot}}; }
inline Step C(ContractId target, std::uint32_t payload = 20, std::uint32_t ret = 10) {
  return CallStep{target, payload, ret};
}
inline Step X(double ms = 1.0) { return ComputeStep{ms}; }

inline Transaction txn(TxnId id, std::vector<Step> trace, SimTime issue = 0.0) {
  Transaction t;
  t.id = id;
  t.issue_time = issue;
  t.trace = std::move(trace);
  return t;
}

/// Contract c lives on shard c % n_shards.
inline Placement modulo_placement(ContractId n_contracts, std::uint32_t n_shards) {
  std::unordered_map<ContractId, ShardId> map;
  for (ContractId c = 0; c < n_contracts; ++c) map[c] = c % n_shards;
  return Placement(std::move(map), n_shards);
}

inline TxnLookup lookup_in(const std::vector<Transaction>& txns) {
  return [&txns](TxnId id) -> const Transaction& {
    for (const auto& t : txns) {
      if (t.id == id) return t;
    }
    throw std::out_of_range("txn " + std::to_string(id));
  };
}

}  // namespace prophet::test
