#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "thetastream/cluster/cluster.hpp"
#include "thetastream/engine/context.hpp"
#include "thetastream/stream/checkpoint.hpp"
#include "thetastream/stream/wal.hpp"
#include "thetastream/theta/broker.hpp"

namespace thetastream::stream {

struct StreamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IntervalOutOfRange : StreamError {
  explicit IntervalOutOfRange(long long got)
      : StreamError("batch interval " + std::to_string(got) + "ms outside [100, 10000]") {}
};

struct IntervalMismatch : StreamError {
  IntervalMismatch(long long a, long long b)
      : StreamError("streams tick at " + std::to_string(a) + "ms vs " + std::to_string(b) +
                    "ms; combine equal cadences only") {}
};

struct InvalidWindow : StreamError {
  using StreamError::StreamError;
};

struct NoFreeCore : StreamError {
  explicit NoFreeCore(const std::string& what) : StreamError(what) {}
};

struct ReplicationFailed : StreamError {
  ReplicationFailed(int alive, int need)
      : StreamError("checkpoint needs " + std::to_string(need) + " live workers, have " +
                    std::to_string(alive)) {}
};

using StreamId = int;

enum class Reliability { Reliable, Unreliable };

using TransformWholeFn =
    std::function<std::vector<engine::Value>(const std::vector<engine::Value>&)>;
// Invoked per key holding new values and/or live state; nullopt removes the key.
using StateFn = std::function<std::optional<engine::Value>(
    const engine::Value& key, const std::vector<engine::Value>& new_values,
    const std::optional<engine::Value>& state)>;
using SinkFn = std::function<void(long long batch_id, const std::vector<engine::Value>&)>;

struct BatchStats {
  long long batch_id = 0;
  long long seal_ms = 0;
  long long start_ms = 0;   // max(seal, previous finish): batches run in order
  long long finish_ms = 0;
  double duration_ms = 0.0;
  long long received = 0;   // messages sealed into the batch
  long long processed = 0;  // elements handed to sinks
  int waiting_at_seal = 0;  // earlier batches not yet started at seal time
  bool replayed = false;    // re-run from the log after a restart
};

struct StreamingConfig {
  long long checkpoint_every_ms = 10000;
  std::string wal_path;        // required when any receiver is reliable
  std::string checkpoint_dir;  // empty: no periodic snapshots
  int replication_factor = 1;  // live workers a snapshot must span
  double per_state_key_ms = 0.0;  // driver-side charge per state key touched
  std::string group = "app";      // consumer-group namespace on the broker
};

// Micro-batch runtime over the dataset engine. Receivers drain a broker topic;
// every interval the context seals what arrived into a numbered batch and runs
// the declared pipelines over it, batch by batch, in seal order. Durations are
// modeled, so a batch slower than the interval queues its successors; the
// queue depth at each seal is the backpressure signal. Reliable receivers log
// ahead of the upstream ack and batches replay from the log after a driver
// restart under their original ids; sinks that deduplicate by batch id then
// observe each effect exactly once. Unreliable receivers keep nothing.
class StreamingContext {
 public:
  StreamingContext(theta::Broker* broker, StreamingConfig cfg,
                   cluster::Cluster* cluster = nullptr);

  engine::Context& engine() { return ectx_; }
  const StreamingConfig& config() const { return cfg_; }

  // --- graph construction (declare before start/restore) ---
  StreamId receiver_stream(const std::string& name, const std::string& topic,
                           long long interval_ms, Reliability rel = Reliability::Reliable);
  StreamId map(StreamId parent, const std::string& fn_id);
  StreamId filter(StreamId parent, const std::string& fn_id);
  StreamId flat_map(StreamId parent, const std::string& fn_id);
  StreamId transform_whole(StreamId parent, const std::string& fn_id);
  StreamId union_streams(StreamId a, StreamId b);
  StreamId join_streams(StreamId a, StreamId b);
  // Emits every slide_ms covering the trailing window_ms of parent output;
  // both must be positive multiples of the parent cadence, slide >= cadence.
  // Off-slide ticks yield no batch for downstream consumers.
  StreamId window(StreamId parent, long long window_ms, long long slide_ms);
  // Keyed state over [key, value] pairs, spread across state_partitions by key
  // hash. Entries idle strictly longer than ttl_ms expire unseen. Output per
  // batch: live [key, state] pairs.
  StreamId update_state_by_key(StreamId parent, const std::string& state_fn_id,
                               int state_partitions, long long ttl_ms = -1);
  void foreach_batch(StreamId s, const std::string& sink_id);

  void add_transform(const std::string& id, TransformWholeFn fn);
  void add_state_fn(const std::string& id, StateFn fn);
  void add_sink(const std::string& id, SinkFn fn);

  // --- lifecycle ---
  // Reserves one core per receiver (and demands one left over for tasks),
  // subscribes them, opens the log.
  void start(long long t0_ms);
  // Rebuilds a freshly declared, not-yet-started context from the newest
  // snapshot plus log replay. Sealed batches the snapshot does not cover run
  // again immediately under their original ids; logged-but-unsealed messages
  // wait for the next new batch. The epoch bumps so new ids never collide.
  void restore(long long restart_ms);
  // Runs every whole tick due in (now, to_ms].
  void advance(long long to_ms);
  // Partial-tick receiver drain: reliable intake is logged and acked,
  // unreliable intake is settled at the broker and held only in memory.
  void ingest_up_to(long long t_ms);
  // Driver loss: drains up to t_ms, then drops volatile buffers and frees
  // receiver cores. Only reliable intake survives in the log.
  void on_driver_killed(long long t_ms);
  // Mid-batch executor loss: the running batch re-executes the dead worker's
  // share on survivors and re-derives everything since the last snapshot.
  void on_worker_killed(const std::string& worker, long long t_ms);

  void checkpoint_now();  // throws ReplicationFailed when under-replicated

  // --- introspection ---
  const std::vector<BatchStats>& history() const { return stats_; }
  int waiting_batches() const;  // sealed batches whose start lies in the future
  long long now_ms() const { return now_; }
  long long interval_ms() const { return interval_; }
  long long epoch() const { return epoch_; }
  bool running() const { return running_; }
  long long last_checkpoint_ms() const { return last_ckpt_; }
  std::size_t state_size(StreamId s) const;
  std::vector<StateEntry> state_entries(StreamId s) const;
  const std::vector<std::string>& notes() const { return notes_; }
  WriteAheadLog* wal() { return wal_.get(); }

 private:
  struct StreamOp {
    enum class Kind {
      Receiver,
      Map,
      Filter,
      FlatMap,
      TransformWhole,
      Union,
      Join,
      Window,
      UpdateState
    };
    Kind kind = Kind::Receiver;
    int id = 0;
    long long interval_ms = 0;
    std::vector<int> parents;
    std::string fn_id;
    std::string name;   // receiver stream name (and log key)
    std::string topic;
    Reliability reliability = Reliability::Reliable;
    long long window_ms = 0;
    long long slide_ms = 0;
    int state_partitions = 1;
    long long ttl_ms = -1;
  };

  struct StateCell {
    engine::Value key;
    engine::Value state;
    long long last_update_ms = 0;
  };

  // Per-batch evaluation scratch: node memo plus charges accrued driver-side.
  struct BatchExec {
    std::map<int, std::optional<engine::DatasetId>> memo;
    std::map<std::string, std::vector<engine::Value>> receiver_items;
    long long seal_ms = 0;
    double modeled_ms = 0.0;
    long long processed = 0;
  };

  StreamId add_op(StreamOp op);
  const StreamOp& op(StreamId s) const;
  int task_partitions() const;
  std::string group_for(const StreamOp& r) const;
  void require_not_started() const;
  void note(long long t_ms, const std::string& line);

  void tick(long long t_ms);
  void seal_and_run(long long t_ms);
  void run_batch(long long batch_id, long long seal_ms,
                 std::map<std::string, std::vector<engine::Value>> members, bool replayed);
  std::optional<engine::DatasetId> eval(StreamId s, BatchExec& bx);
  std::vector<engine::Value> run_collect(engine::DatasetId ds, BatchExec& bx);
  void maybe_checkpoint(long long t_ms);
  CheckpointImage build_image(long long t_ms) const;
  void reserve_cores_and_subscribe();
  void release_cores();

  theta::Broker* broker_;
  StreamingConfig cfg_;
  cluster::Cluster* cluster_;
  engine::Context ectx_;

  std::vector<StreamOp> ops_;
  std::vector<std::pair<StreamId, std::string>> sinks_;
  std::map<std::string, TransformWholeFn> transforms_;
  std::map<std::string, StateFn> state_fns_;
  std::map<std::string, SinkFn> sink_fns_;

  // key dump -> cell, one map per state partition, per stateful node
  std::map<int, std::vector<std::map<std::string, StateCell>>> state_;
  std::map<int, std::deque<WindowEntry>> retained_;

  // receiver -> intake held for the next seal, as (source id, payload)
  std::map<std::string, std::vector<std::pair<std::string, engine::Value>>> pending_;
  std::vector<cluster::SlotRef> receiver_cores_;

  std::unique_ptr<WriteAheadLog> wal_;
  std::vector<BatchStats> stats_;
  std::vector<std::vector<cluster::TaskAssignment>> assignments_;  // per batch

  long long interval_ = 0;
  long long now_ = 0;
  long long epoch_ = 0;
  long long seq_ = 0;
  long long last_processed_batch_ = -1;
  long long last_finish_ = 0;
  long long last_ckpt_ = 0;
  double pending_penalty_ms_ = 0.0;  // lineage re-derivation charged to the next batch
  bool running_ = false;
  std::vector<std::string> notes_;
};

}  // namespace thetastream::stream
