#pragma once

#include <map>
#include <string>
#include <vector>

#include "prophet/core.hpp"

namespace prophet {

enum class Mechanism { Prophet, OCC, TwoPL };

Mechanism parse_mechanism(const std::string& text);
std::string to_string(Mechanism m);

/// One committed transaction in serial order. Prophet orders by
/// (round, position); the baselines by commit sequence (round = 0).
struct CommittedTxn {
  TxnId txn_id = 0;
  std::uint32_t attempt = 0;
  Round round = 0;
  std::uint64_t position = 0;
  SimTime commit_time = 0.0;
};

/// Line of the confirmed-history export.
struct HistoryRecord {
  Round round = 0;
  std::uint32_t position = 0;
  TxnId txn_id = 0;
  std::uint32_t attempt = 0;
  std::string status;  // confirmed | invalidated | cascaded
  SimTime time_ms = 0.0;
};

struct TxnOutcome {
  TxnId txn_id = 0;
  SimTime issue_time = 0.0;
  bool committed = false;
  bool aborted = false;  // gave up for good
  SimTime commit_time = 0.0;
  std::uint32_t attempts = 0;  // executions (baselines) or sequenced instances (Prophet)
  std::size_t call_count = 0;
};

struct RoundStats {
  Round round = 0;
  SimTime trigger_time = 0.0;
  std::size_t candidates = 0;
  std::size_t admitted = 0;
  std::size_t rejected = 0;
  std::size_t capacity_deferred = 0;
  std::size_t invalid = 0;   // direct Invalid verdicts for this round's instances
  std::size_t cascaded = 0;  // invalidated through a predecessor
  std::size_t confirmed = 0;
};

struct RunResult {
  Mechanism mechanism = Mechanism::Prophet;
  std::vector<TxnOutcome> txns;
  std::vector<CommittedTxn> history;  // serial order
  std::vector<HistoryRecord> log;
  std::map<StorageKey, Value> final_state;  // written keys only
  std::vector<RoundStats> rounds;

  std::size_t sequenced = 0;
  std::size_t invalid = 0;
  std::size_t cascaded = 0;
  std::size_t candidates = 0;
  std::size_t rejected = 0;
  std::size_t corrupted_profiles = 0;
  std::size_t corrupted_confirmed = 0;
  std::size_t rejected_proofs = 0;
  std::size_t retries = 0;

  std::uint64_t event_digest = 0;
  std::uint64_t event_count = 0;
  SimTime end_time = 0.0;
  bool drained = false;  // every transaction reached a terminal state
  std::vector<std::string> violations;  // invariant violations seen during the run
};

}  // namespace prophet
