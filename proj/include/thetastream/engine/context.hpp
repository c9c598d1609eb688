#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "thetastream/engine/dataset.hpp"
#include "thetastream/engine/errors.hpp"
#include "thetastream/engine/functions.hpp"
#include "thetastream/engine/shared_vars.hpp"
#include "thetastream/engine/stage.hpp"
#include "thetastream/engine/task_runner.hpp"
#include "thetastream/engine/value.hpp"

namespace thetastream::engine {

struct TaskMetrics {
  long long tasks_executed = 0;        // partition computations, cache misses only
  long long partitions_recomputed = 0; // re-executed after a failed attempt
  long long shuffles = 0;              // wide boundaries materialized
  long long actions = 0;
};

// Modeled per-element costs used when the runner keeps virtual time. Charged
// through ExecContext; wall-clock runners ignore the charges.
struct CostModel {
  double task_base_ms = 0.5;
  double per_element_ms = 0.0;
};

using Partition = std::vector<Value>;

// Dataset engine: immutable partitioned collections with lazy transforms,
// lineage-based recomputation, explicit persist, broadcast and accumulators.
// Transformations only extend the lineage graph; work happens at actions.
class Context {
 public:
  explicit Context(TaskRunner* runner = nullptr);

  FunctionRegistry& fns() { return fns_; }
  BroadcastStore& broadcasts() { return broadcasts_; }
  AccumulatorStore& accumulators() { return accumulators_; }
  CostModel& costs() { return costs_; }
  void set_runner(TaskRunner* runner);

  // --- lineage construction (lazy) ---
  DatasetId parallelize(std::vector<Value> items, int num_partitions);
  DatasetId map(DatasetId parent, const std::string& fn_id);
  DatasetId filter(DatasetId parent, const std::string& fn_id);
  DatasetId flat_map(DatasetId parent, const std::string& fn_id);
  DatasetId union_all(const std::vector<DatasetId>& parents);
  // Wide ops repartition by key; num_partitions <= 0 keeps the left parent's
  // count (the default partitioner is hash(key) mod that count).
  DatasetId reduce_by_key(DatasetId parent, const std::string& fn_id, int num_partitions = 0);
  DatasetId group_by_key(DatasetId parent, int num_partitions = 0);
  DatasetId join(DatasetId left, DatasetId right, int num_partitions = 0);
  DatasetId persist(DatasetId ds);  // marks; materializes on next action

  // --- actions ---
  std::vector<Value> collect(DatasetId ds);
  long long count(DatasetId ds);
  void foreach(DatasetId ds, const std::string& foreach_fn_id);

  // --- planning & recovery ---
  std::vector<Stage> build_stages(DatasetId ds) const;
  // Rebuilds one partition by walking lineage up to sources or the nearest
  // materialized persisted ancestor, then replaying transforms downward.
  Partition recompute_partition(DatasetId ds, int partition);

  // --- shared variables ---
  template <class T>
  BroadcastHandle<T> broadcast(T value) {
    return broadcasts_.create(std::move(value));
  }
  template <class T>
  std::shared_ptr<const T> resolve(BroadcastHandle<T> h) {
    return broadcasts_.resolve(h);
  }
  AccumulatorId make_accumulator(Value zero, ReduceFn merge) {
    return accumulators_.create(std::move(zero), std::move(merge));
  }
  void accumulator_add(AccumulatorId id, const Value& delta) { accumulators_.add(id, delta); }
  Value accumulator_value(AccumulatorId id) const { return accumulators_.value(id); }

  // --- introspection ---
  const DatasetNode& node(DatasetId id) const;
  std::vector<DatasetNode> nodes_snapshot() const;
  const TaskMetrics& metrics() const { return metrics_; }
  long long exec_count(DatasetId id) const;  // partition computations of this node
  bool is_materialized(DatasetId id) const;  // all partitions cached
  void drop_cached_partition(DatasetId id, int partition);
  double last_action_modeled_ms() const { return last_action_modeled_ms_; }

 private:
  struct ActionScope {
    // Shuffle buckets per wide dataset for the current action.
    std::map<DatasetId, std::vector<Partition>> shuffled;
  };

  DatasetId add_node(int num_partitions, std::variant<SourceOrigin, TransformOrigin> origin);
  const DatasetNode& node_unlocked(DatasetId id) const;
  void check_keyed(const Value& v, OpKind k) const;

  // Per-partition evaluation; narrow chains fuse through recursion.
  Partition compute_partition(DatasetId id, int partition, ActionScope& scope);
  void ensure_shuffled(DatasetId wide_id, ActionScope& scope);
  // Materializes every partition of `id` with stage-level task parallelism.
  std::vector<Partition> materialize(DatasetId id, ActionScope& scope);
  std::vector<Partition> run_action(DatasetId target);
  // Wide nodes whose shuffle the action actually needs (persisted cuts honored).
  void collect_active_wides(DatasetId id, std::vector<DatasetId>& out,
                            std::vector<char>& seen) const;

  // deque: node references stay valid while lineage grows
  mutable std::mutex mu_;
  std::deque<DatasetNode> nodes_;
  std::map<DatasetId, std::vector<std::optional<Partition>>> cache_;
  std::map<DatasetId, long long> exec_counts_;
  FunctionRegistry fns_;
  BroadcastStore broadcasts_;
  AccumulatorStore accumulators_;
  CostModel costs_;
  TaskMetrics metrics_;
  SerialRunner default_runner_;
  TaskRunner* runner_;
  long long next_task_uid_ = 0;
  double last_action_modeled_ms_ = 0.0;
};

}  // namespace thetastream::engine
