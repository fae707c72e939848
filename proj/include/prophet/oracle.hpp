#pragma once

#include <map>
#include <vector>

#include "prophet/execution.hpp"
#include "prophet/history.hpp"

namespace prophet {

/// The trusted monolithic executor. Never used on the protocol path.
struct IdealResult {
  std::map<StorageKey, Value> final_state;  // written keys only
  std::vector<TransactionProfile> profiles;
};

/// Executes `order` serially on one state that starts at `genesis` (keys
/// absent from it hold genesis_value) and returns the ground-truth profiles.
IdealResult ideal_execute(const std::vector<const Transaction*>& order, const Placement& placement,
                          const std::map<StorageKey, Value>& genesis = {},
                          Granularity granularity = Granularity::StateLevel);

/// True iff replaying `history` serially from genesis reproduces
/// `final_state`, where keys missing on either side hold genesis_value.
/// Throws if the history names a transaction `lookup` does not know.
bool check_serializable(const std::vector<CommittedTxn>& history, const TxnLookup& lookup,
                        const Placement& placement, const std::map<StorageKey, Value>& final_state);

/// Same profile content, ignoring who produced it and when.
bool same_profile_content(const TransactionProfile& a, const TransactionProfile& b);

}  // namespace prophet
