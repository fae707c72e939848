#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include "prophet/core.hpp"

namespace prophet {

/// One write of one transaction instance. Records of a key are kept sorted by
/// (round, position); `round` may be any monotone stamp (baselines use a
/// global write counter).
struct WriteRecord {
  Round round = 0;
  std::uint32_t position = 0;
  InstanceId writer = 0;
  Value value = 0;
};

/// Multiversion key/value storage with per-writer rollback. Reads of keys
/// nobody wrote return genesis_value().
class VersionedStore {
 public:
  Value read_latest(const StorageKey& key) const;
  /// Latest record with round <= `round`.
  Value read_as_of(const StorageKey& key, Round round) const;
  std::optional<WriteRecord> latest(const StorageKey& key) const;
  const std::vector<WriteRecord>& records(const StorageKey& key) const;

  void write(const StorageKey& key, const WriteRecord& record);

  /// Removes every record written by `writer`; returns the affected keys.
  std::vector<StorageKey> rollback(InstanceId writer);
  bool has_writes(InstanceId writer) const { return by_writer_.count(writer) != 0; }

  /// Latest value per written key, restricted to writers accepted by `keep`.
  template <class Pred>
  std::map<StorageKey, Value> materialize(Pred keep) const {
    std::map<StorageKey, Value> out;
    for (const auto& [key, recs] : records_) {
      for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
        if (keep(it->writer)) {
          out[key] = it->value;
          break;
        }
      }
    }
    return out;
  }
  std::map<StorageKey, Value> materialize() const {
    return materialize([](InstanceId) { return true; });
  }

  std::size_t key_count() const { return records_.size(); }

 private:
  std::unordered_map<StorageKey, std::vector<WriteRecord>, StorageKeyHash> records_;
  std::unordered_map<InstanceId, std::vector<StorageKey>> by_writer_;
};

}  // namespace prophet
