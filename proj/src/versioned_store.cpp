#include "prophet/versioned_store.hpp"

#include <algorithm>

namespace prophet {

namespace {
const std::vector<WriteRecord> kNoRecords;

bool record_before(const WriteRecord& a, const WriteRecord& b) {
  return a.round != b.round ? a.round < b.round : a.position < b.position;
}
}  // namespace

Value VersionedStore::read_latest(const StorageKey& key) const {
  auto it = records_.find(key);
  if (it == records_.end() || it->second.empty()) return genesis_value(key);
  return it->second.back().value;
}

Value VersionedStore::read_as_of(const StorageKey& key, Round round) const {
  auto it = records_.find(key);
  if (it == records_.end()) return genesis_value(key);
  const auto& recs = it->second;
  for (auto r = recs.rbegin(); r != recs.rend(); ++r) {
    if (r->round <= round) return r->value;
  }
  return genesis_value(key);
}

std::optional<WriteRecord> VersionedStore::latest(const StorageKey& key) const {
  auto it = records_.find(key);
  if (it == records_.end() || it->second.empty()) return std::nullopt;
  return it->second.back();
}

const std::vector<WriteRecord>& VersionedStore::records(const StorageKey& key) const {
  auto it = records_.find(key);
  return it == records_.end() ? kNoRecords : it->second;
}

void VersionedStore::write(const StorageKey& key, const WriteRecord& record) {
  auto& recs = records_[key];
  if (recs.empty() || !record_before(record, recs.back())) {
    recs.push_back(record);
  } else {
    recs.insert(std::upper_bound(recs.begin(), recs.end(), record, record_before), record);
  }
  auto& keys = by_writer_[record.writer];
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
}

std::vector<StorageKey> VersionedStore::rollback(InstanceId writer) {
  auto it = by_writer_.find(writer);
  if (it == by_writer_.end()) return {};
  std::vector<StorageKey> keys = std::move(it->second);
  by_writer_.erase(it);
  for (const auto& key : keys) {
    auto rit = records_.find(key);
    if (rit == records_.end()) continue;
    auto& recs = rit->second;
    recs.erase(std::remove_if(recs.begin(), recs.end(), [&](const WriteRecord& r) { return r.writer == writer; }),
               recs.end());
    if (recs.empty()) records_.erase(rit);
  }
  return keys;
}

}  // namespace prophet
