#include "doctest.h"

#include <atomic>
#include <map>
#include <string>
#include <vector>

#include "thetastream/cluster/cluster.hpp"
#include "thetastream/engine/context.hpp"

using namespace thetastream::cluster;
namespace eng = thetastream::engine;

namespace {

std::vector<eng::Value> ints(std::initializer_list<int> xs) {
  std::vector<eng::Value> out;
  for (int x : xs) out.push_back(x);
  return out;
}

struct RecordingApp : Application {
  int need = 1;
  std::vector<long long> killed;
  std::vector<long long> restarted;

  void on_driver_killed(long long t_ms) override { killed.push_back(t_ms); }
  void on_driver_restarted(long long t_ms) override { restarted.push_back(t_ms); }
  int required_slots() const override { return need; }
};

std::vector<std::string> log_workers(const WorkerPool& pool) {
  std::vector<std::string> out;
  for (const auto& a : pool.assignment_log()) out.push_back(a.worker);
  return out;
}

}  // namespace

TEST_CASE("leader is the lowest-id live master; elections count only on leader loss") {
  ClusterConfig cfg;
  cfg.n_masters = 3;
  SimClock clk;
  Cluster c(cfg, &clk);
  REQUIRE(c.leader() == std::string("m0"));

  clk.now_ms = 100;
  c.inject_fault({100, FaultKind::KillMaster, "m2"});  // standby loss
  CHECK(c.leader() == std::string("m0"));
  CHECK(c.metrics().leader_elections == 0);

  clk.now_ms = 200;
  c.inject_fault({200, FaultKind::KillMaster, "m0"});
  CHECK(c.leader() == std::string("m1"));
  CHECK(c.metrics().leader_elections == 1);

  clk.now_ms = 300;
  c.inject_fault({300, FaultKind::KillMaster, "m1"});
  CHECK_FALSE(c.leader().has_value());
}

TEST_CASE("an application that outsizes the cluster is rejected") {
  ClusterConfig cfg;  // 2 workers x 2 slots
  SimClock clk;
  Cluster c(cfg, &clk);

  RecordingApp big;
  big.need = 5;
  CHECK_THROWS_AS(c.submit_application(&big), InsufficientSlots);
  CHECK_FALSE(c.driver_alive());

  RecordingApp fits;
  fits.need = 4;
  c.submit_application(&fits);
  CHECK(c.driver_alive());
}

TEST_CASE("slot reservation is first-free and survives release/re-reserve") {
  ClusterConfig cfg;
  SimClock clk;
  WorkerPool pool(cfg, &clk);

  auto a = pool.reserve_slot();
  auto b = pool.reserve_slot();
  CHECK(a.name() == "w0/0");
  CHECK(b.name() == "w0/1");
  CHECK(pool.alive_task_slots() == 2);

  pool.release_slot(a);
  CHECK(pool.reserve_slot().name() == "w0/0");
}

TEST_CASE("killing a worker removes its slots and voids its reservations") {
  ClusterConfig cfg;
  SimClock clk;
  Cluster c(cfg, &clk);
  auto& pool = c.pool();

  auto r = pool.reserve_slot();  // w0/0
  CHECK(pool.total_slots() == 4);
  CHECK(pool.alive_task_slots() == 3);

  clk.now_ms = 500;
  c.inject_fault({500, FaultKind::KillWorker, "w0"});
  CHECK_FALSE(pool.worker_alive("w0"));
  CHECK(pool.alive_workers() == std::vector<std::string>{"w1"});
  CHECK(pool.total_slots() == 2);
  CHECK(pool.alive_task_slots() == 2);  // dead worker's reservation is gone
  CHECK(c.executors() == std::vector<std::string>{"executor@w1"});

  // releasing the stale reservation is harmless
  pool.release_slot(r);
  CHECK(pool.alive_task_slots() == 2);
}

TEST_CASE("round-robin placement is deterministic and spans every slot") {
  ClusterConfig cfg;
  SimClock clk;
  WorkerPool pool(cfg, &clk);

  eng::Context ctx;
  ctx.set_runner(&pool);
  ctx.fns().add_map("double", [](const eng::Value& v) { return eng::Value(v.get<int>() * 2); });
  auto ds = ctx.map(ctx.parallelize(ints({1, 2, 3, 4}), 4), "double");

  CHECK(ctx.collect(ds) == std::vector<eng::Value>(ints({2, 4, 6, 8})));
  CHECK(log_workers(pool) == std::vector<std::string>{"w0", "w0", "w1", "w1"});

  // the cursor persists across stages, so the next stage starts where we left off
  CHECK(ctx.count(ds) == 4);
  CHECK(log_workers(pool) ==
        std::vector<std::string>{"w0", "w0", "w1", "w1", "w0", "w0", "w1", "w1"});

  // a fresh pool and context replay the exact same assignment
  WorkerPool pool2(cfg, &clk);
  eng::Context ctx2;
  ctx2.set_runner(&pool2);
  ctx2.fns().add_map("double", [](const eng::Value& v) { return eng::Value(v.get<int>() * 2); });
  auto ds2 = ctx2.map(ctx2.parallelize(ints({1, 2, 3, 4}), 4), "double");
  ctx2.collect(ds2);
  ctx2.count(ds2);
  CHECK(pool2.assignment_log().size() == pool.assignment_log().size());
  CHECK(log_workers(pool2) == log_workers(pool));
}

TEST_CASE("a failed attempt is retried on a different worker") {
  ClusterConfig cfg;
  SimClock clk;
  WorkerPool pool(cfg, &clk);

  eng::Context ctx;
  ctx.set_runner(&pool);
  std::atomic<int> failures{0};
  ctx.fns().add_map("flaky", [&](const eng::Value& v) {
    if (v.get<int>() == 30 && eng::current_exec().attempt == 0) {
      failures++;
      throw std::runtime_error("lost executor output");
    }
    return v;
  });
  auto ds = ctx.map(ctx.parallelize(ints({10, 20, 30, 40}), 4), "flaky");

  CHECK(ctx.collect(ds) == std::vector<eng::Value>(ints({10, 20, 30, 40})));
  CHECK(failures == 1);
  CHECK(ctx.metrics().partitions_recomputed >= 1);

  // partition 2 started on w1 (round robin), so its retry must land on w0
  std::map<int, std::string> by_partition;
  for (const auto& a : pool.assignment_log()) by_partition[a.partition] = a.worker;
  CHECK(by_partition[2] == "w0");
  CHECK(by_partition[0] == "w0");
  CHECK(by_partition[3] == "w1");
}

TEST_CASE("broadcast resolves once per worker that reads it") {
  ClusterConfig cfg;
  SimClock clk;
  WorkerPool pool(cfg, &clk);

  eng::Context ctx;
  ctx.set_runner(&pool);
  auto h = ctx.broadcast(std::map<std::string, int>{{"a", 1}, {"b", 2}});
  ctx.fns().add_map("lookup", [&, h](const eng::Value& v) {
    auto t = ctx.resolve(h);
    return eng::Value(t->at(v.get<std::string>()));
  });
  std::vector<eng::Value> keys = {"a", "b", "a", "b"};
  auto ds = ctx.map(ctx.parallelize(keys, 4), "lookup");

  CHECK(ctx.collect(ds) == std::vector<eng::Value>(ints({1, 2, 1, 2})));
  // tasks ran on w0 and w1; the driver never resolved the handle
  CHECK(ctx.broadcasts().resolve_sites(h.id) == 2);
}

TEST_CASE("parallel mode reports wall-clock stage time and identical results") {
  ClusterConfig cfg;
  cfg.parallel = true;
  SimClock clk;
  WorkerPool pool(cfg, &clk);

  eng::Context ctx;
  ctx.set_runner(&pool);
  ctx.fns().add_reduce("sum", [](const eng::Value& a, const eng::Value& b) {
    return eng::Value(a.get<long long>() + b.get<long long>());
  });
  auto acc = ctx.make_accumulator(0, ctx.fns().reduce("sum"));
  ctx.fns().add_foreach("bump", [&, acc](const eng::Value&) { ctx.accumulator_add(acc, 1); });

  std::vector<eng::Value> many;
  for (int i = 0; i < 100; ++i) many.push_back(i);
  auto ds = ctx.parallelize(many, 4);
  ctx.foreach(ds, "bump");

  CHECK(ctx.accumulator_value(acc) == eng::Value(100));
  CHECK(ctx.last_action_modeled_ms() > 0.0);  // wall clock, not charged cost
  CHECK(ctx.collect(ds) == many);
}

TEST_CASE("a killed driver restarts after the delay while a master survives") {
  ClusterConfig cfg;
  SimClock clk;
  Cluster c(cfg, &clk);
  RecordingApp app;
  c.submit_application(&app);

  clk.now_ms = 1000;
  c.inject_fault({1000, FaultKind::KillDriver, ""});
  CHECK_FALSE(c.driver_alive());
  CHECK(app.killed == std::vector<long long>{1000});

  c.process_until(3999);
  CHECK_FALSE(c.driver_alive());

  clk.now_ms = 4000;
  c.process_until(4000);
  CHECK(c.driver_alive());
  CHECK(c.metrics().driver_restarts == 1);
  CHECK(app.restarted == std::vector<long long>{4000});
  CHECK_FALSE(c.metrics().supervision_lost);
}

TEST_CASE("no master means no supervision: the driver stays down") {
  ClusterConfig cfg;  // single master
  SimClock clk;
  Cluster c(cfg, &clk);
  RecordingApp app;
  c.submit_application(&app);

  clk.now_ms = 100;
  c.inject_fault({100, FaultKind::KillMaster, "m0"});
  CHECK_FALSE(c.leader().has_value());

  clk.now_ms = 200;
  c.inject_fault({200, FaultKind::KillDriver, ""});
  CHECK(c.metrics().supervision_lost);

  clk.now_ms = 100000;
  c.process_until(100000);
  CHECK_FALSE(c.driver_alive());
  CHECK(c.metrics().driver_restarts == 0);
  CHECK(app.restarted.empty());
}

TEST_CASE("identical configurations and fault sequences produce identical traces") {
  auto run = []() {
    ClusterConfig cfg;
    cfg.n_masters = 2;
    SimClock clk;
    Cluster c(cfg, &clk);
    RecordingApp app;
    c.submit_application(&app);
    clk.now_ms = 1000;
    c.inject_fault({1000, FaultKind::KillWorker, "w1"});
    clk.now_ms = 2000;
    c.inject_fault({2000, FaultKind::KillMaster, "m0"});
    clk.now_ms = 3000;
    c.inject_fault({3000, FaultKind::KillDriver, ""});
    clk.now_ms = 6000;
    c.process_until(6000);
    return c.trace();
  };
  auto t1 = run();
  auto t2 = run();
  REQUIRE(!t1.empty());
  CHECK(t1 == t2);
}
