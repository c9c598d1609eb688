#include "thetastream/engine/context.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <sstream>

#include "thetastream/engine/value.hpp"

namespace thetastream::engine {

namespace {
thread_local ExecContext g_exec;
}  // namespace

ExecContext& current_exec() { return g_exec; }

ExecScope::ExecScope(ExecContext ctx) : saved_(g_exec) { g_exec = std::move(ctx); }
ExecScope::~ExecScope() { g_exec = saved_; }

StageRunStats SerialRunner::run_stage(std::vector<TaskSpec> tasks) {
  StageRunStats stats;
  double slot_ms = 0.0;
  for (auto& t : tasks) {
    for (int attempt = 0;; ++attempt) {
      stats.attempts++;
      ExecContext ctx;
      ctx.worker_id = "local-0";
      ctx.task_uid = t.task_uid;
      ctx.attempt = attempt;
      ctx.in_task = true;
      try {
        ExecScope scope(ctx);
        t.body();
        slot_ms += current_exec().charged_ms;
      } catch (const std::exception& e) {
        stats.failed_attempts++;
        if (t.discard) t.discard(attempt);
        if (attempt + 1 >= retry_budget_) {
          throw TaskFailed("task " + std::to_string(t.task_uid) + " failed after " +
                           std::to_string(attempt + 1) + " attempts: " + e.what());
        }
        continue;
      }
      if (t.commit) t.commit(attempt);
      break;
    }
  }
  stats.modeled_ms = slot_ms;
  return stats;
}

// --- accumulators ---

AccumulatorId AccumulatorStore::create(Value zero, ReduceFn merge) {
  std::lock_guard lk(mu_);
  AccumulatorId id = next_id_++;
  accs_[id] = Acc{std::move(zero), std::move(merge), {}};
  return id;
}

void AccumulatorStore::add(AccumulatorId id, const Value& delta) {
  std::lock_guard lk(mu_);
  auto it = accs_.find(id);
  if (it == accs_.end()) throw EngineError("unknown accumulator");
  Acc& acc = it->second;
  const ExecContext& ec = current_exec();
  if (!ec.in_task) {
    acc.total = acc.merge(acc.total, delta);
    return;
  }
  auto key = std::make_pair(ec.task_uid, ec.attempt);
  auto p = acc.pending.find(key);
  if (p == acc.pending.end()) {
    acc.pending[key] = delta;
  } else {
    p->second = acc.merge(p->second, delta);
  }
}

Value AccumulatorStore::value(AccumulatorId id) const {
  if (current_exec().in_task) throw WorkerReadForbidden();
  std::lock_guard lk(mu_);
  auto it = accs_.find(id);
  if (it == accs_.end()) throw EngineError("unknown accumulator");
  return it->second.total;
}

void AccumulatorStore::commit_attempt(long long task_uid, int attempt) {
  std::lock_guard lk(mu_);
  for (auto& [id, acc] : accs_) {
    auto p = acc.pending.find({task_uid, attempt});
    if (p != acc.pending.end()) {
      acc.total = acc.merge(acc.total, p->second);
      acc.pending.erase(p);
    }
    // Older attempts of the same task can never win; drop their partials.
    for (auto it = acc.pending.begin(); it != acc.pending.end();) {
      if (it->first.first == task_uid) {
        it = acc.pending.erase(it);
      } else {
        ++it;
      }
    }
  }
}

void AccumulatorStore::discard_attempt(long long task_uid, int attempt) {
  std::lock_guard lk(mu_);
  for (auto& [id, acc] : accs_) acc.pending.erase({task_uid, attempt});
}

// --- stages ---

std::string Stage::describe(const std::vector<DatasetNode>& nodes) const {
  std::ostringstream os;
  os << "stage " << id << ": ";
  for (std::size_t i = 0; i < pipeline.size(); ++i) {
    if (i) os << " -> ";
    os << op_name(nodes[pipeline[i]].kind()) << "#" << pipeline[i];
  }
  if (!inline_inputs.empty()) {
    os << " (inline:";
    for (auto d : inline_inputs) os << " " << op_name(nodes[d].kind()) << "#" << d;
    os << ")";
  }
  if (!parents.empty()) {
    os << " <- stages[";
    for (std::size_t i = 0; i < parents.size(); ++i) os << (i ? "," : "") << parents[i];
    os << "]";
  }
  os << (ends_at_action ? " => action" : " => shuffle");
  return os.str();
}

// --- context ---

Context::Context(TaskRunner* runner)
    : default_runner_(kTaskRetryBudget), runner_(runner ? runner : &default_runner_) {}

void Context::set_runner(TaskRunner* runner) { runner_ = runner ? runner : &default_runner_; }

DatasetId Context::add_node(int num_partitions,
                            std::variant<SourceOrigin, TransformOrigin> origin) {
  std::lock_guard lk(mu_);
  DatasetNode n;
  n.id = static_cast<DatasetId>(nodes_.size());
  n.num_partitions = num_partitions;
  n.origin = std::move(origin);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

const DatasetNode& Context::node_unlocked(DatasetId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw UnknownDataset(id);
  return nodes_[id];
}

const DatasetNode& Context::node(DatasetId id) const {
  std::lock_guard lk(mu_);
  return node_unlocked(id);
}

std::vector<DatasetNode> Context::nodes_snapshot() const {
  std::lock_guard lk(mu_);
  return {nodes_.begin(), nodes_.end()};
}

DatasetId Context::parallelize(std::vector<Value> items, int num_partitions) {
  if (num_partitions <= 0) throw ZeroPartitions();
  return add_node(num_partitions, SourceOrigin{std::move(items)});
}

DatasetId Context::map(DatasetId parent, const std::string& fn_id) {
  const auto& p = node(parent);
  return add_node(p.num_partitions, TransformOrigin{OpKind::Map, {parent}, fn_id});
}

DatasetId Context::filter(DatasetId parent, const std::string& fn_id) {
  const auto& p = node(parent);
  return add_node(p.num_partitions, TransformOrigin{OpKind::Filter, {parent}, fn_id});
}

DatasetId Context::flat_map(DatasetId parent, const std::string& fn_id) {
  const auto& p = node(parent);
  return add_node(p.num_partitions, TransformOrigin{OpKind::FlatMap, {parent}, fn_id});
}

DatasetId Context::union_all(const std::vector<DatasetId>& parents) {
  if (parents.empty()) throw EngineError("union needs at least one input");
  int total = 0;
  for (auto p : parents) total += node(p).num_partitions;
  return add_node(total, TransformOrigin{OpKind::Union, parents, ""});
}

DatasetId Context::reduce_by_key(DatasetId parent, const std::string& fn_id,
                                 int num_partitions) {
  const auto& p = node(parent);
  int n = num_partitions > 0 ? num_partitions : p.num_partitions;
  return add_node(n, TransformOrigin{OpKind::ReduceByKey, {parent}, fn_id});
}

DatasetId Context::group_by_key(DatasetId parent, int num_partitions) {
  const auto& p = node(parent);
  int n = num_partitions > 0 ? num_partitions : p.num_partitions;
  return add_node(n, TransformOrigin{OpKind::GroupByKey, {parent}, ""});
}

DatasetId Context::join(DatasetId left, DatasetId right, int num_partitions) {
  const auto& l = node(left);
  node(right);
  int n = num_partitions > 0 ? num_partitions : l.num_partitions;
  return add_node(n, TransformOrigin{OpKind::Join, {left, right}, ""});
}

DatasetId Context::persist(DatasetId ds) {
  std::lock_guard lk(mu_);
  auto& n = nodes_[node_unlocked(ds).id];
  n.persisted = true;
  cache_.try_emplace(ds, n.num_partitions);
  return ds;
}

bool Context::is_materialized(DatasetId id) const {
  std::lock_guard lk(mu_);
  auto it = cache_.find(id);
  if (it == cache_.end()) return false;
  return std::all_of(it->second.begin(), it->second.end(),
                     [](const auto& p) { return p.has_value(); });
}

void Context::drop_cached_partition(DatasetId id, int partition) {
  std::lock_guard lk(mu_);
  auto it = cache_.find(id);
  if (it == cache_.end()) return;
  if (partition < 0 || static_cast<std::size_t>(partition) >= it->second.size())
    throw PartitionOutOfRange(partition, static_cast<int>(it->second.size()));
  it->second[partition].reset();
}

long long Context::exec_count(DatasetId id) const {
  std::lock_guard lk(mu_);
  auto it = exec_counts_.find(id);
  return it == exec_counts_.end() ? 0 : it->second;
}

void Context::check_keyed(const Value& v, OpKind k) const {
  if (!is_pair(v)) throw NotKeyed(std::string(op_name(k)) + " saw " + v.dump());
}

Partition Context::compute_partition(DatasetId id, int partition, ActionScope& scope) {
  const DatasetNode* nd;
  {
    std::lock_guard lk(mu_);
    nd = &node_unlocked(id);
    if (partition < 0 || partition >= nd->num_partitions)
      throw PartitionOutOfRange(partition, nd->num_partitions);
    if (nd->persisted) {
      auto it = cache_.find(id);
      if (it != cache_.end() && it->second[partition].has_value())
        return *it->second[partition];
    }
  }

  Partition out;
  switch (nd->kind()) {
    case OpKind::Source: {
      const auto& items = std::get<SourceOrigin>(nd->origin).items;
      auto [b, e] = chunk_bounds(items.size(), nd->num_partitions, partition);
      out.assign(items.begin() + b, items.begin() + e);
      break;
    }
    case OpKind::Map: {
      const auto& t = nd->transform();
      Partition in = compute_partition(t.parents[0], partition, scope);
      const MapFn& fn = fns_.map(t.fn_id);
      out.reserve(in.size());
      for (auto& v : in) out.push_back(fn(v));
      break;
    }
    case OpKind::Filter: {
      const auto& t = nd->transform();
      Partition in = compute_partition(t.parents[0], partition, scope);
      const FilterFn& fn = fns_.filter(t.fn_id);
      for (auto& v : in)
        if (fn(v)) out.push_back(std::move(v));
      break;
    }
    case OpKind::FlatMap: {
      const auto& t = nd->transform();
      Partition in = compute_partition(t.parents[0], partition, scope);
      const FlatMapFn& fn = fns_.flat_map(t.fn_id);
      for (auto& v : in) {
        auto produced = fn(v);
        out.insert(out.end(), produced.begin(), produced.end());
      }
      break;
    }
    case OpKind::Union: {
      const auto& t = nd->transform();
      int local = partition;
      for (auto p : t.parents) {
        int pn = node(p).num_partitions;
        if (local < pn) {
          out = compute_partition(p, local, scope);
          break;
        }
        local -= pn;
      }
      break;
    }
    case OpKind::ReduceByKey:
    case OpKind::GroupByKey:
    case OpKind::Join: {
      ensure_shuffled(id, scope);
      const auto& sh = scope.shuffled.at(id);
      const auto& t = nd->transform();
      if (nd->kind() == OpKind::Join) {
        // sh holds left buckets in [0, n) and right buckets in [n, 2n).
        const Partition& lb = sh[partition];
        const Partition& rb = sh[nd->num_partitions + partition];
        std::map<std::string, std::vector<Value>> rights;
        for (const auto& rv : rb) rights[rv[0].dump()].push_back(rv[1]);
        for (const auto& lv : lb) {
          auto it = rights.find(lv[0].dump());
          if (it == rights.end()) continue;
          for (const auto& r : it->second) out.push_back(Value::array({lv[0], Value::array({lv[1], r})}));
        }
      } else if (nd->kind() == OpKind::ReduceByKey) {
        const ReduceFn& fn = fns_.reduce(t.fn_id);
        std::vector<std::string> order;
        std::map<std::string, Value> acc;
        for (const auto& v : sh[partition]) {
          auto k = v[0].dump();
          auto it = acc.find(k);
          if (it == acc.end()) {
            acc.emplace(k, v[1]);
            order.push_back(k);
          } else {
            it->second = fn(it->second, v[1]);
          }
        }
        for (const auto& k : order) out.push_back(Value::array({Value::parse(k), acc[k]}));
      } else {
        std::vector<std::string> order;
        std::map<std::string, Value> groups;
        for (const auto& v : sh[partition]) {
          auto k = v[0].dump();
          auto it = groups.find(k);
          if (it == groups.end()) {
            groups.emplace(k, Value::array({v[1]}));
            order.push_back(k);
          } else {
            it->second.push_back(v[1]);
          }
        }
        for (const auto& k : order) out.push_back(Value::array({Value::parse(k), groups[k]}));
      }
      break;
    }
  }

  current_exec().charged_ms += costs_.per_element_ms * static_cast<double>(out.size());

  {
    std::lock_guard lk(mu_);
    exec_counts_[id]++;
    metrics_.tasks_executed++;
    if (nd->persisted) {
      auto it = cache_.find(id);
      if (it != cache_.end()) it->second[partition] = out;
    }
  }
  return out;
}

void Context::ensure_shuffled(DatasetId wide_id, ActionScope& scope) {
  if (scope.shuffled.count(wide_id)) return;
  const DatasetNode& nd = node(wide_id);
  const auto& t = nd.transform();
  const int n = nd.num_partitions;
  std::vector<Partition> buckets(t.kind == OpKind::Join ? 2 * n : n);
  auto scatter = [&](DatasetId parent, int offset) {
    auto parts = materialize(parent, scope);
    for (const auto& part : parts) {
      for (const auto& v : part) {
        check_keyed(v, t.kind);
        buckets[offset + key_partition(v[0], n)].push_back(v);
      }
    }
  };
  scatter(t.parents[0], 0);
  if (t.kind == OpKind::Join) scatter(t.parents[1], n);
  {
    std::lock_guard lk(mu_);
    metrics_.shuffles++;
  }
  scope.shuffled.emplace(wide_id, std::move(buckets));
}

void Context::collect_active_wides(DatasetId id, std::vector<DatasetId>& out,
                                   std::vector<char>& seen) const {
  if (seen[id]) return;
  seen[id] = 1;
  const DatasetNode& nd = node(id);
  if (nd.persisted && is_materialized(id)) return;  // cache cuts lineage here
  if (nd.is_source()) return;
  if (is_wide(nd.kind())) {
    out.push_back(id);
    return;  // ancestors handled when the shuffle materializes its parents
  }
  for (auto p : nd.transform().parents) collect_active_wides(p, out, seen);
}

std::vector<Partition> Context::materialize(DatasetId id, ActionScope& scope) {
  const DatasetNode& nd = node(id);
  if (nd.persisted && is_materialized(id)) {
    std::lock_guard lk(mu_);
    std::vector<Partition> parts;
    for (auto& p : cache_.at(id)) parts.push_back(*p);
    return parts;
  }

  // Prepare shuffle inputs on the driver so task bodies never nest stages.
  std::vector<DatasetId> wides;
  {
    std::vector<char> seen(nodes_snapshot().size(), 0);
    collect_active_wides(id, wides, seen);
  }
  for (auto w : wides) ensure_shuffled(w, scope);

  std::vector<Partition> parts(nd.num_partitions);
  std::vector<TaskSpec> tasks;
  tasks.reserve(nd.num_partitions);
  for (int i = 0; i < nd.num_partitions; ++i) {
    TaskSpec t;
    t.task_uid = next_task_uid_++;
    t.partition = i;
    long long uid = t.task_uid;
    t.body = [this, id, i, &parts, &scope] {
      current_exec().charged_ms += costs_.task_base_ms;
      parts[i] = compute_partition(id, i, scope);
    };
    t.commit = [this, uid](int attempt) { accumulators_.commit_attempt(uid, attempt); };
    t.discard = [this, uid](int attempt) { accumulators_.discard_attempt(uid, attempt); };
    tasks.push_back(std::move(t));
  }
  auto stats = runner_->run_stage(std::move(tasks));
  {
    std::lock_guard lk(mu_);
    last_action_modeled_ms_ += stats.modeled_ms;
    if (stats.attempts > nd.num_partitions)
      metrics_.partitions_recomputed += stats.attempts - nd.num_partitions;
  }
  return parts;
}

std::vector<Partition> Context::run_action(DatasetId target) {
  node(target);  // validity check
  {
    std::lock_guard lk(mu_);
    metrics_.actions++;
    last_action_modeled_ms_ = 0.0;
  }
  ActionScope scope;
  return materialize(target, scope);
}

std::vector<Value> Context::collect(DatasetId ds) {
  auto parts = run_action(ds);
  std::vector<Value> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

long long Context::count(DatasetId ds) {
  auto parts = run_action(ds);
  long long n = 0;
  for (auto& p : parts) n += static_cast<long long>(p.size());
  return n;
}

void Context::foreach(DatasetId ds, const std::string& foreach_fn_id) {
  const ForeachFn& fn = fns_.foreach(foreach_fn_id);  // resolve before running
  {
    std::lock_guard lk(mu_);
    metrics_.actions++;
    last_action_modeled_ms_ = 0.0;
  }
  ActionScope scope;
  const DatasetNode& nd = node(ds);

  std::vector<DatasetId> wides;
  {
    std::vector<char> seen(nodes_snapshot().size(), 0);
    collect_active_wides(ds, wides, seen);
  }
  for (auto w : wides) ensure_shuffled(w, scope);

  std::vector<TaskSpec> tasks;
  for (int i = 0; i < nd.num_partitions; ++i) {
    TaskSpec t;
    t.task_uid = next_task_uid_++;
    t.partition = i;
    long long uid = t.task_uid;
    t.body = [this, ds, i, &scope, &fn] {
      current_exec().charged_ms += costs_.task_base_ms;
      Partition part = compute_partition(ds, i, scope);
      for (const auto& v : part) fn(v);
    };
    t.commit = [this, uid](int attempt) { accumulators_.commit_attempt(uid, attempt); };
    t.discard = [this, uid](int attempt) { accumulators_.discard_attempt(uid, attempt); };
    tasks.push_back(std::move(t));
  }
  auto stats = runner_->run_stage(std::move(tasks));
  {
    std::lock_guard lk(mu_);
    last_action_modeled_ms_ += stats.modeled_ms;
    if (stats.attempts > nd.num_partitions)
      metrics_.partitions_recomputed += stats.attempts - nd.num_partitions;
  }
}

Partition Context::recompute_partition(DatasetId ds, int partition) {
  ActionScope scope;
  Partition out = compute_partition(ds, partition, scope);
  std::lock_guard lk(mu_);
  metrics_.partitions_recomputed++;
  return out;
}

std::vector<Stage> Context::build_stages(DatasetId target) const {
  std::vector<DatasetNode> nodes = nodes_snapshot();
  if (target < 0 || static_cast<std::size_t>(target) >= nodes.size())
    throw UnknownDataset(target);

  std::vector<Stage> stages;
  std::map<DatasetId, int> stage_memo;  // producing stage per already-planned node

  std::vector<int> has_wide_memo(nodes.size(), -1);
  std::function<bool(DatasetId)> has_wide = [&](DatasetId id) -> bool {
    if (has_wide_memo[id] >= 0) return has_wide_memo[id] != 0;
    const auto& nd = nodes[id];
    bool w = false;
    if (!nd.is_source()) {
      w = is_wide(nd.kind());
      if (!w)
        for (auto p : nd.transform().parents) w = w || has_wide(p);
    }
    has_wide_memo[id] = w ? 1 : 0;
    return w;
  };

  std::function<int(DatasetId, bool)> stage_for = [&](DatasetId out, bool root) -> int {
    if (!root) {
      auto it = stage_memo.find(out);
      if (it != stage_memo.end()) return it->second;
    }
    Stage st;
    std::vector<char> in_stage(nodes.size(), 0);

    std::function<void(DatasetId)> inline_chain = [&](DatasetId n) {
      if (in_stage[n]) return;
      in_stage[n] = 1;
      st.inline_inputs.push_back(n);
      const auto& nd = nodes[n];
      if (!nd.is_source())
        for (auto p : nd.transform().parents) inline_chain(p);
    };

    std::function<void(DatasetId)> absorb = [&](DatasetId n) {
      if (in_stage[n]) return;
      in_stage[n] = 1;
      const auto& nd = nodes[n];
      st.pipeline.push_back(n);
      if (nd.is_source()) return;
      const auto& t = nd.transform();
      if (is_wide(t.kind)) {
        // Shuffle boundary: parents become map-side stages, except a join's
        // secondary input without wide ancestry, which evaluates in place.
        for (std::size_t i = 0; i < t.parents.size(); ++i) {
          DatasetId p = t.parents[i];
          if (t.kind == OpKind::Join && i == 1 && !has_wide(p)) {
            inline_chain(p);
          } else {
            st.parents.push_back(stage_for(p, false));
          }
        }
        return;
      }
      if (t.kind == OpKind::Union) {
        for (auto p : t.parents) absorb(p);
        return;
      }
      absorb(t.parents[0]);
    };

    absorb(out);
    std::reverse(st.pipeline.begin(), st.pipeline.end());
    st.id = static_cast<int>(stages.size());
    st.ends_at_action = root;
    stages.push_back(st);
    if (!root) stage_memo[out] = st.id;
    return st.id;
  };

  stage_for(target, true);
  // Creation order is already topological: parent stages are built before the
  // stage that reads their shuffle output.
  return stages;
}

}  // namespace thetastream::engine
