#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "thetastream/engine/task_runner.hpp"

namespace thetastream::cluster {

struct ClusterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientSlots : ClusterError {
  InsufficientSlots(int need, int have)
      : ClusterError("application needs " + std::to_string(need) + " slots, cluster has " +
                     std::to_string(have)) {}
};

struct SimClock {
  long long now_ms = 0;
};

struct ClusterConfig {
  int n_workers = 2;
  int slots_per_worker = 2;
  int n_masters = 1;
  int replication_factor = 2;
  long long driver_restart_delay_ms = 3000;
  unsigned long long seed = 1;
  bool parallel = false;  // true: slot threads + wall-clock stage times
};

enum class FaultKind { KillWorker, KillDriver, KillMaster };

struct FaultEvent {
  long long t_ms = 0;
  FaultKind kind = FaultKind::KillWorker;
  std::string node;  // ignored for KillDriver
};

using FaultPlan = std::vector<FaultEvent>;

struct ClusterMetrics {
  long long recomputed_stages = 0;
  long long partitions_reexecuted = 0;
  long long driver_restarts = 0;
  long long leader_elections = 0;
  bool supervision_lost = false;
};

struct SlotRef {
  std::string worker;
  int slot = 0;
  std::string name() const { return worker + "/" + std::to_string(slot); }
};

struct TaskAssignment {
  int stage_seq = 0;  // per-batch stage counter
  int partition = 0;
  std::string worker;
  double cost_ms = 0.0;
};

// Simulated worker slots backing the engine's task runner. Deterministic mode
// executes tasks inline on the control thread and keeps modeled per-slot time;
// parallel mode runs one thread per slot and reports wall-clock stage time.
class WorkerPool : public engine::TaskRunner {
 public:
  WorkerPool(const ClusterConfig& cfg, SimClock* clock);

  engine::StageRunStats run_stage(std::vector<engine::TaskSpec> tasks) override;

  SlotRef reserve_slot();  // for receivers; deterministic first-free order
  void release_slot(const SlotRef& slot);

  void kill_worker(const std::string& worker, long long at_ms);
  bool worker_alive(const std::string& worker) const;
  std::vector<std::string> alive_workers() const;
  int alive_task_slots() const;  // unreserved slots on live workers
  int total_slots() const;

  // Assignment log of the stages run since the last reset; the streaming layer
  // uses it to re-cost batches hit by a mid-batch worker kill.
  void reset_assignment_log();
  const std::vector<TaskAssignment>& assignment_log() const { return log_; }

 private:
  struct Worker {
    std::string id;
    bool alive = true;
    long long killed_at = -1;
    int slots = 0;
  };

  std::vector<SlotRef> assignable_slots() const;

  ClusterConfig cfg_;
  SimClock* clock_;
  std::vector<Worker> workers_;
  std::set<std::pair<std::string, int>> reserved_;
  std::vector<TaskAssignment> log_;
  int stage_seq_ = 0;
  std::size_t rr_cursor_ = 0;
  int retry_budget_ = engine::kTaskRetryBudget;
};

// Application hooks the cluster drives on driver faults.
class Application {
 public:
  virtual ~Application() = default;
  virtual void on_driver_killed(long long t_ms) = 0;
  virtual void on_driver_restarted(long long t_ms) = 0;
  virtual int required_slots() const = 0;  // receivers + at least one task slot
};

// Driver/master/worker topology with crash-stop fault injection. Masters form
// a standby chain; the leader is the lowest-id live master. A supervised
// driver is restarted driver_restart_delay_ms after a kill while any master
// lives. All transitions append to a deterministic trace.
class Cluster {
 public:
  Cluster(const ClusterConfig& cfg, SimClock* clock);

  WorkerPool& pool() { return pool_; }
  const ClusterConfig& config() const { return cfg_; }

  void submit_application(Application* app);

  void inject_fault(const FaultEvent& e);
  // Applies scheduled work (driver restarts) due at or before now.
  void process_until(long long now_ms);

  std::optional<std::string> leader() const;
  bool driver_alive() const { return driver_alive_; }
  const ClusterMetrics& metrics() const { return metrics_; }
  ClusterMetrics& metrics_mut() { return metrics_; }
  const std::vector<std::string>& trace() const { return trace_; }
  std::vector<std::string> executors() const;

 private:
  void note(const std::string& line);

  ClusterConfig cfg_;
  SimClock* clock_;
  WorkerPool pool_;
  std::map<std::string, bool> masters_;  // id -> alive
  Application* app_ = nullptr;
  bool driver_alive_ = false;
  long long restart_due_ = -1;
  ClusterMetrics metrics_;
  std::vector<std::string> trace_;
};

}  // namespace thetastream::cluster
