#pragma once

#include <any>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include "thetastream/engine/errors.hpp"
#include "thetastream/engine/functions.hpp"
#include "thetastream/engine/task_runner.hpp"
#include "thetastream/engine/value.hpp"

namespace thetastream::engine {

template <class T>
struct BroadcastHandle {
  int id = -1;
};

// Read-only values shipped once per worker. The store keeps the driver copy;
// each worker resolves it at most once and reuses its cached reference. There
// is no write path: resolution hands out shared_ptr<const T>.
class BroadcastStore {
 public:
  template <class T>
  BroadcastHandle<T> create(T value) {
    std::lock_guard lk(mu_);
    int id = next_id_++;
    entries_[id].value = std::make_shared<const T>(std::move(value));
    return BroadcastHandle<T>{id};
  }

  template <class T>
  std::shared_ptr<const T> resolve(BroadcastHandle<T> h) {
    std::lock_guard lk(mu_);
    auto it = entries_.find(h.id);
    if (it == entries_.end()) throw UnknownBroadcast(h.id);
    const std::string& worker = current_exec().worker_id;
    it->second.resolved_on.insert(worker);
    auto p = std::any_cast<std::shared_ptr<const T>>(&it->second.value);
    if (!p) throw UnknownBroadcast(h.id);
    return *p;
  }

  // Distinct workers that resolved the handle (driver included if it did).
  int resolve_sites(int id) const {
    std::lock_guard lk(mu_);
    auto it = entries_.find(id);
    return it == entries_.end() ? 0 : static_cast<int>(it->second.resolved_on.size());
  }

 private:
  struct Entry {
    std::any value;
    std::set<std::string> resolved_on;
  };
  mutable std::mutex mu_;
  int next_id_ = 0;
  std::map<int, Entry> entries_;
};

using AccumulatorId = int;

// Driver-owned aggregation variable. Tasks only add; partials are buffered per
// (task, attempt) and merged into the total when the attempt wins, so retries
// never double-count. Reading from a task context is a programming error.
class AccumulatorStore {
 public:
  AccumulatorId create(Value zero, ReduceFn merge);

  void add(AccumulatorId id, const Value& delta);
  Value value(AccumulatorId id) const;  // driver only

  // Runner hooks.
  void commit_attempt(long long task_uid, int attempt);
  void discard_attempt(long long task_uid, int attempt);

 private:
  struct Acc {
    Value total;
    ReduceFn merge;
    // pending partials per (task_uid, attempt)
    std::map<std::pair<long long, int>, Value> pending;
  };
  mutable std::mutex mu_;
  std::map<AccumulatorId, Acc> accs_;
  AccumulatorId next_id_ = 0;
};

}  // namespace thetastream::engine
