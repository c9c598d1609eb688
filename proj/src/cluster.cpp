#include "thetastream/cluster/cluster.hpp"

#include "thetastream/engine/errors.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

namespace thetastream::cluster {

using engine::ExecContext;
using engine::ExecScope;
using engine::StageRunStats;
using engine::TaskSpec;

WorkerPool::WorkerPool(const ClusterConfig& cfg, SimClock* clock) : cfg_(cfg), clock_(clock) {
  for (int i = 0; i < cfg.n_workers; ++i) {
    Worker w;
    w.id = "w" + std::to_string(i);
    w.slots = cfg.slots_per_worker;
    workers_.push_back(w);
  }
}

std::vector<SlotRef> WorkerPool::assignable_slots() const {
  std::vector<SlotRef> out;
  for (const auto& w : workers_) {
    if (!w.alive) continue;
    for (int s = 0; s < w.slots; ++s) {
      if (reserved_.count({w.id, s})) continue;
      out.push_back({w.id, s});
    }
  }
  return out;
}

SlotRef WorkerPool::reserve_slot() {
  auto slots = assignable_slots();
  if (slots.empty()) throw ClusterError("no free slot left to reserve");
  reserved_.insert({slots[0].worker, slots[0].slot});
  return slots[0];
}

void WorkerPool::release_slot(const SlotRef& slot) { reserved_.erase({slot.worker, slot.slot}); }

void WorkerPool::kill_worker(const std::string& worker, long long at_ms) {
  for (auto& w : workers_) {
    if (w.id != worker) continue;
    w.alive = false;
    w.killed_at = at_ms;
    // reservations on a dead worker are void
    for (int s = 0; s < w.slots; ++s) reserved_.erase({w.id, s});
  }
}

bool WorkerPool::worker_alive(const std::string& worker) const {
  for (const auto& w : workers_)
    if (w.id == worker) return w.alive;
  return false;
}

std::vector<std::string> WorkerPool::alive_workers() const {
  std::vector<std::string> out;
  for (const auto& w : workers_)
    if (w.alive) out.push_back(w.id);
  return out;
}

int WorkerPool::alive_task_slots() const { return static_cast<int>(assignable_slots().size()); }

int WorkerPool::total_slots() const {
  int n = 0;
  for (const auto& w : workers_)
    if (w.alive) n += w.slots;
  return n;
}

void WorkerPool::reset_assignment_log() {
  log_.clear();
  stage_seq_ = 0;
}

StageRunStats WorkerPool::run_stage(std::vector<TaskSpec> tasks) {
  StageRunStats stats;
  auto slots = assignable_slots();
  if (slots.empty()) throw ClusterError("no live task slot available");
  const int stage_seq = stage_seq_++;

  struct Placed {
    TaskSpec spec;
    SlotRef slot;
  };
  std::vector<Placed> placed;
  placed.reserve(tasks.size());
  for (auto& t : tasks) {
    SlotRef s = slots[rr_cursor_ % slots.size()];
    rr_cursor_++;
    placed.push_back({std::move(t), s});
  }

  std::map<std::string, double> slot_ms;
  std::mutex mu;

  auto run_one = [&](Placed& p) {
    for (int attempt = 0;; ++attempt) {
      {
        std::lock_guard lk(mu);
        stats.attempts++;
      }
      ExecContext ctx;
      ctx.worker_id = p.slot.worker;
      ctx.task_uid = p.spec.task_uid;
      ctx.attempt = attempt;
      ctx.in_task = true;
      double charged = 0.0;
      try {
        ExecScope scope(ctx);
        p.spec.body();
        charged = engine::current_exec().charged_ms;
      } catch (const std::exception& e) {
        if (p.spec.discard) p.spec.discard(attempt);
        std::lock_guard lk(mu);
        stats.failed_attempts++;
        if (attempt + 1 >= retry_budget_) {
          throw engine::TaskFailed("task " + std::to_string(p.spec.task_uid) +
                                   " failed after " + std::to_string(attempt + 1) +
                                   " attempts: " + e.what());
        }
        // steer the retry to the next slot (another worker when possible)
        auto cur = assignable_slots();
        if (cur.empty()) throw engine::TaskFailed("no slots left for retry");
        for (const auto& c : cur) {
          if (c.worker != p.slot.worker) {
            p.slot = c;
            break;
          }
          p.slot = c;
        }
        continue;
      }
      {
        std::lock_guard lk(mu);
        slot_ms[p.slot.name()] += charged;
        log_.push_back({stage_seq, p.spec.partition, p.slot.worker, charged});
      }
      if (p.spec.commit) p.spec.commit(attempt);
      return;
    }
  };

  if (!cfg_.parallel) {
    for (auto& p : placed) run_one(p);
    for (auto& [name, ms] : slot_ms) stats.modeled_ms = std::max(stats.modeled_ms, ms);
    return stats;
  }

  // Parallel mode: one thread per distinct slot used, wall-clock stage time.
  auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, std::vector<Placed*>> by_slot;
  for (auto& p : placed) by_slot[p.slot.name()].push_back(&p);
  std::vector<std::thread> threads;
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (auto& kv : by_slot) {
    auto* list = &kv.second;
    threads.emplace_back([&, list] {
      try {
        for (auto* p : *list) run_one(*p);
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
  stats.modeled_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

// --- cluster ---

Cluster::Cluster(const ClusterConfig& cfg, SimClock* clock)
    : cfg_(cfg), clock_(clock), pool_(cfg, clock) {
  for (int i = 0; i < cfg.n_masters; ++i) masters_["m" + std::to_string(i)] = true;
  note("cluster up: " + std::to_string(cfg.n_masters) + " masters, " +
       std::to_string(cfg.n_workers) + " workers x " + std::to_string(cfg.slots_per_worker) +
       " slots");
}

void Cluster::note(const std::string& line) {
  trace_.push_back("t=" + std::to_string(clock_->now_ms) + " " + line);
}

std::optional<std::string> Cluster::leader() const {
  for (const auto& [id, alive] : masters_)  // map order == lowest id first
    if (alive) return id;
  return std::nullopt;
}

std::vector<std::string> Cluster::executors() const {
  std::vector<std::string> out;
  for (const auto& w : pool_.alive_workers()) out.push_back("executor@" + w);
  return out;
}

void Cluster::submit_application(Application* app) {
  const int need = app->required_slots();
  if (pool_.total_slots() < need) throw InsufficientSlots(need, pool_.total_slots());
  app_ = app;
  driver_alive_ = true;
  note("driver started, executors on " + std::to_string(pool_.alive_workers().size()) +
       " workers");
}

void Cluster::inject_fault(const FaultEvent& e) {
  switch (e.kind) {
    case FaultKind::KillWorker: {
      if (!pool_.worker_alive(e.node)) return;
      pool_.kill_worker(e.node, e.t_ms);
      note("kill worker " + e.node);
      break;
    }
    case FaultKind::KillMaster: {
      auto it = masters_.find(e.node);
      if (it == masters_.end() || !it->second) return;
      const bool was_leader = leader() == e.node;
      it->second = false;
      note("kill master " + e.node);
      if (was_leader) {
        auto next = leader();
        if (next) {
          metrics_.leader_elections++;
          note("leader election -> " + *next);
        } else {
          note("no master left, supervision lost");
        }
      }
      break;
    }
    case FaultKind::KillDriver: {
      if (!driver_alive_) return;
      driver_alive_ = false;
      note("kill driver");
      if (app_) app_->on_driver_killed(e.t_ms);
      if (leader()) {
        restart_due_ = e.t_ms + cfg_.driver_restart_delay_ms;
        note("driver restart scheduled at t=" + std::to_string(restart_due_));
      } else {
        metrics_.supervision_lost = true;
        note("driver not restarted: no live master");
      }
      break;
    }
  }
}

void Cluster::process_until(long long now_ms) {
  if (restart_due_ >= 0 && restart_due_ <= now_ms && !driver_alive_) {
    driver_alive_ = true;
    metrics_.driver_restarts++;
    note("driver restarted");
    long long at = restart_due_;
    restart_due_ = -1;
    if (app_) app_->on_driver_restarted(at);
  }
}

}  // namespace thetastream::cluster
