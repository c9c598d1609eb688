#pragma once

#include <functional>
#include <string>
#include <vector>

namespace thetastream::engine {

// Identity of the code currently running. Tasks execute under a slot of a
// simulated worker; driver-side code runs with worker_id == kDriver.
struct ExecContext {
  std::string worker_id = "driver";
  long long task_uid = -1;  // unique per (action, stage, partition)
  int attempt = 0;
  bool in_task = false;
  double charged_ms = 0.0;  // modeled cost accumulated by the task body
};

inline constexpr const char* kDriver = "driver";

ExecContext& current_exec();

// Scoped swap of the calling thread's exec context.
class ExecScope {
 public:
  explicit ExecScope(ExecContext ctx);
  ~ExecScope();
  ExecScope(const ExecScope&) = delete;
  ExecScope& operator=(const ExecScope&) = delete;

 private:
  ExecContext saved_;
};

struct TaskSpec {
  long long task_uid = 0;
  int partition = 0;
  // Throws to signal attempt failure; the runner retries on another slot.
  std::function<void()> body;
  // Invoked exactly once with the winning attempt number.
  std::function<void(int)> commit;
  // Invoked with the attempt number after every failed attempt.
  std::function<void(int)> discard;
};

struct StageRunStats {
  double modeled_ms = 0.0;   // max over slots of summed task charges
  int attempts = 0;          // total attempts across tasks
  int failed_attempts = 0;
};

// Executes the tasks of one stage. Implementations decide slot placement,
// parallelism and retry bookkeeping; the engine only requires that every task
// either commits exactly once or the whole stage throws TaskFailed.
class TaskRunner {
 public:
  virtual ~TaskRunner() = default;
  virtual StageRunStats run_stage(std::vector<TaskSpec> tasks) = 0;
};

// Driver-thread runner used outside cluster simulations: one local slot,
// retry budget shared with the simulated runners.
class SerialRunner : public TaskRunner {
 public:
  explicit SerialRunner(int retry_budget = 3) : retry_budget_(retry_budget) {}
  StageRunStats run_stage(std::vector<TaskSpec> tasks) override;

 private:
  int retry_budget_;
};

inline constexpr int kTaskRetryBudget = 3;

}  // namespace thetastream::engine
