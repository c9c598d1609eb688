#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "thetastream/cis/csv.hpp"
#include "thetastream/cis/parse.hpp"
#include "thetastream/cis/prices.hpp"
#include "thetastream/cis/recommend.hpp"
#include "thetastream/cis/station_index.hpp"
#include "thetastream/cis/trip.hpp"
#include "thetastream/harness/experiment.hpp"
#include "thetastream/stream/streaming.hpp"

namespace thetastream::harness {

namespace eng = thetastream::engine;
namespace th = thetastream::theta;
namespace cl = thetastream::cluster;
namespace st = thetastream::stream;
namespace cis = thetastream::cis;
using eng::Value;

namespace {

constexpr const char* kTopic = "telemetry";

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

// --- scenarios ----------------------------------------------------------

LoadScenario single_vehicle_scenario() {
  LoadScenario sc;
  sc.kind = ScenarioKind::SingleVehicle;
  return sc;
}

LoadScenario fleet_scenario(int n_vehicles) {
  LoadScenario sc;
  sc.kind = ScenarioKind::Fleet;
  sc.fleet_size = n_vehicles;
  return sc;
}

LoadScenario all_distinct_scenario() {
  LoadScenario sc;
  sc.kind = ScenarioKind::AllDistinct;
  sc.fuel_max = 49.9;  // below the threshold: every message reaches the keyed state
  return sc;
}

LoadScenario gas_search_scenario() {
  LoadScenario sc;
  sc.kind = ScenarioKind::GasSearch;
  sc.fuel_max = 49.9;  // below the threshold: every message searches for a station
  return sc;
}

MessageGenerator::MessageGenerator(LoadScenario scenario, unsigned long long seed)
    : sc_(scenario), rng_(seed) {}

MessageGenerator::Walk& MessageGenerator::walker(const std::string& vehicle_id) {
  auto it = walks_.find(vehicle_id);
  if (it == walks_.end()) {
    Walk w;
    w.lat = std::uniform_real_distribution<double>(sc_.min_lat, sc_.max_lat)(rng_);
    w.lon = std::uniform_real_distribution<double>(sc_.min_lon, sc_.max_lon)(rng_);
    it = walks_.emplace(vehicle_id, w).first;
  }
  return it->second;
}

void MessageGenerator::step(Walk& w) {
  std::uniform_real_distribution<double> d(-0.002, 0.002);
  w.lat = std::clamp(w.lat + d(rng_), sc_.min_lat, sc_.max_lat);
  w.lon = std::clamp(w.lon + d(rng_), sc_.min_lon, sc_.max_lon);
}

std::vector<GeneratedMessage> MessageGenerator::tick(long long tick_index, int rate) {
  if (rate <= 0) throw HarnessError("rate must be positive");
  std::uniform_real_distribution<double> fuel_dist(sc_.fuel_min, sc_.fuel_max);
  std::uniform_real_distribution<double> lat_dist(sc_.min_lat, sc_.max_lat);
  std::uniform_real_distribution<double> lon_dist(sc_.min_lon, sc_.max_lon);
  std::uniform_int_distribution<int> jitter(-100, 100);

  std::vector<GeneratedMessage> out;
  out.reserve(rate);
  for (int i = 0; i < rate; ++i) {
    GeneratedMessage m;
    long long offset = (1000LL * i) / rate;
    double lat = 0, lon = 0;
    switch (sc_.kind) {
      case ScenarioKind::SingleVehicle: {
        m.vehicle_id = "veh-0";
        Walk& w = walker(m.vehicle_id);
        step(w);
        lat = w.lat;
        lon = w.lon;
        break;
      }
      case ScenarioKind::Fleet: {
        m.vehicle_id = "veh-" + std::to_string((fleet_cursor_ + i) % sc_.fleet_size);
        offset = std::clamp(offset + jitter(rng_), 0LL, 999LL);
        Walk& w = walker(m.vehicle_id);
        step(w);
        lat = w.lat;
        lon = w.lon;
        break;
      }
      case ScenarioKind::AllDistinct:
      case ScenarioKind::GasSearch: {
        m.vehicle_id = "veh-" + std::to_string(seq_);
        lat = lat_dist(rng_);
        lon = lon_dist(rng_);
        break;
      }
    }
    m.message_id = "m" + std::to_string(seq_);
    m.offset_ms = offset;
    Value doc{{"vehicleid", m.vehicle_id},
              {"timestamp", kBaseTsMs + tick_index * 1000 + offset},
              {"latitude", lat},
              {"longitude", lon},
              {"altitude", 34.0},
              {"readings",
               Value{{"FUEL_LEVEL", fixed1(fuel_dist(rng_))}, {"SEQ", std::to_string(seq_)}}}};
    m.payload = doc.dump();
    ++seq_;
    out.push_back(std::move(m));
  }
  if (sc_.kind == ScenarioKind::Fleet)
    fleet_cursor_ = (fleet_cursor_ + static_cast<std::size_t>(rate)) % sc_.fleet_size;
  std::stable_sort(out.begin(), out.end(),
                   [](const GeneratedMessage& a, const GeneratedMessage& b) {
                     return a.offset_ms < b.offset_ms;
                   });
  return out;
}

long long MessageGenerator::distinct_vehicles() const {
  switch (sc_.kind) {
    case ScenarioKind::SingleVehicle: return seq_ > 0 ? 1 : 0;
    case ScenarioKind::Fleet: return std::min<long long>(sc_.fleet_size, seq_);
    case ScenarioKind::AllDistinct:
    case ScenarioKind::GasSearch: return seq_;
  }
  return 0;
}

// --- reports ------------------------------------------------------------

void write_report_csv(const RunReport& report, std::ostream& out) {
  out << "ts,target_rate,received,processed,batch_ms,waiting_batches,workers\n";
  char num[32];
  for (const auto& r : report.rows) {
    std::snprintf(num, sizeof num, "%.3f", r.batch_ms);
    out << r.ts_ms << ',' << r.target_rate << ',' << r.received << ',' << r.processed << ','
        << num << ',' << r.waiting_batches << ',' << r.workers << '\n';
  }
}

void write_report_csv(const RunReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
  if (!out) throw HarnessError("cannot write '" + path + "'");
  write_report_csv(report, out);
  if (!out.flush()) throw HarnessError("write failed for '" + path + "'");
}

// --- shared pipeline pieces ----------------------------------------------

namespace {

void publish_tick(th::Broker& broker, MessageGenerator& gen, long long tick_index, int rate) {
  for (const auto& m : gen.tick(tick_index, rate))
    broker.publish(kTopic, m.message_id, Value(m.payload).dump(), tick_index * 1000 + m.offset_ms);
}

void register_decode(st::StreamingContext& sctx) {
  sctx.engine().fns().add_flat_map("decode", [](const Value& v) -> std::vector<Value> {
    auto parsed = cis::parse_vehicle_reading(v.get<std::string>());
    if (std::holds_alternative<cis::DeadLetter>(parsed)) return {};
    return {cis::to_value(std::get<cis::VehicleReading>(parsed))};
  });
}

struct TripPipeline {
  st::StreamId gated;   // keyed per-vehicle state stream
  st::StreamId passes;  // readings admitted by the trip gate
};

// Keyed trip pipeline: decode -> (optional fuel filter) -> per-vehicle gate.
TripPipeline declare_trip_pipeline(st::StreamingContext& sctx, st::Reliability rel,
                                   bool filter_fuel) {
  cis::RecommenderConfig rc;
  const long long gap_ms = rc.trip_gap_min * 60000LL;
  register_decode(sctx);
  sctx.engine().fns().add_map("by_vehicle", [](const Value& v) { return Value{v.at("vehicle_id"), v}; });
  sctx.engine().fns().add_flat_map("passes", cis::trip_passes_flat_map());
  sctx.add_state_fn("trip", cis::trip_gate_state_fn(gap_ms));

  auto decoded = sctx.flat_map(sctx.receiver_stream(kTopic, kTopic, 1000, rel), "decode");
  if (filter_fuel) {
    sctx.engine().fns().add_filter("low_fuel", [threshold = rc.fuel_threshold_pct](const Value& v) {
      return v.contains("fuel_pct") && v.at("fuel_pct").get<double>() < threshold;
    });
    decoded = sctx.filter(decoded, "low_fuel");
  }
  TripPipeline p;
  p.gated = sctx.update_state_by_key(sctx.map(decoded, "by_vehicle"), "trip", 4, gap_ms);
  p.passes = sctx.flat_map(p.gated, "passes");
  return p;
}

// Stateless search pipeline: decode -> fuel filter -> nearest-station lookup.
st::StreamId declare_search_pipeline(st::StreamingContext& sctx, st::Reliability rel,
                                     unsigned long long seed) {
  cis::RecommenderConfig rc;
  register_decode(sctx);
  sctx.engine().fns().add_filter("low_fuel", [threshold = rc.fuel_threshold_pct](const Value& v) {
    return v.contains("fuel_pct") && v.at("fuel_pct").get<double>() < threshold;
  });

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lat(47.0, 55.0), lon(6.0, 15.0);
  std::vector<cis::GasStation> corpus;
  for (int i = 0; i < 1000; ++i)
    corpus.push_back({"st-" + std::to_string(i), "", lat(rng), lon(rng)});
  auto h = sctx.engine().broadcast(cis::StationIndex::build(std::move(corpus)));
  sctx.engine().fns().add_map("search", [&sctx, h, radius = rc.radius_km](const Value& v) {
    auto idx = sctx.engine().resolve(h);
    auto hits = idx->nearby(v.at("lat").get<double>(), v.at("lon").get<double>(), radius);
    Value out = v;
    out["nearby"] = static_cast<int>(hits.size());
    return out;
  });

  auto r = sctx.receiver_stream(kTopic, kTopic, 1000, rel);
  return sctx.map(sctx.filter(sctx.flat_map(r, "decode"), "low_fuel"), "search");
}

ReportRow row_for_tick(const st::StreamingContext& sctx, long long ts_ms, int rate, int workers) {
  ReportRow row;
  row.ts_ms = ts_ms;
  row.target_rate = rate;
  row.waiting_batches = sctx.waiting_batches();
  row.workers = workers;
  const auto& hist = sctx.history();
  for (auto it = hist.rbegin(); it != hist.rend(); ++it) {
    if (it->replayed) continue;
    if (it->seal_ms == ts_ms) {
      row.received = it->received;
      row.processed = it->processed;
      row.batch_ms = it->duration_ms;
      break;
    }
    if (it->seal_ms < ts_ms) break;
  }
  return row;
}

}  // namespace

// --- scaling ------------------------------------------------------------

ScalingOutcome run_scaling_experiment(const std::vector<int>& worker_counts,
                                      const LoadScenario& scenario, const RateSchedule& schedule,
                                      const ExperimentConfig& cfg) {
  if (worker_counts.empty()) throw HarnessError("no worker counts given");
  if (schedule.start_rate <= 0 || schedule.step <= 0 || schedule.max_rate < schedule.start_rate ||
      schedule.dwell_s <= 0)
    throw HarnessError("invalid rate schedule");

  ScalingOutcome out;
  for (int workers : worker_counts) {
    th::Broker broker;
    cl::SimClock clk;
    cl::ClusterConfig ccfg;
    ccfg.n_workers = workers;
    ccfg.slots_per_worker = cfg.slots_per_worker;
    ccfg.seed = cfg.seed;
    cl::Cluster cluster(ccfg, &clk);

    st::StreamingConfig scfg;
    scfg.group = "load";
    st::StreamingContext sctx(&broker, scfg, &cluster);
    sctx.engine().costs().per_element_ms = cfg.per_element_ms;

    st::StreamId tail =
        scenario.kind == ScenarioKind::GasSearch
            ? declare_search_pipeline(sctx, st::Reliability::Unreliable, cfg.seed)
            : declare_trip_pipeline(sctx, st::Reliability::Unreliable, true).passes;
    sctx.add_sink("drain", [](long long, const std::vector<Value>&) {});
    sctx.foreach_batch(tail, "drain");
    sctx.start(0);

    MessageGenerator gen(scenario, cfg.seed);
    out.max_sustainable[workers] = 0;
    long long t = 0;
    for (int rate = schedule.start_rate; rate <= schedule.max_rate; rate += schedule.step) {
      int waiting_before = sctx.waiting_batches();
      for (int s = 0; s < schedule.dwell_s; ++s) {
        publish_tick(broker, gen, t / 1000, rate);
        t += 1000;
        clk.now_ms = t;
        sctx.advance(t);
        out.report.rows.push_back(row_for_tick(sctx, t, rate, workers));
      }
      if (sctx.waiting_batches() - waiting_before > 0) break;  // backlog grew: over the knee
      out.max_sustainable[workers] = rate;
    }
  }
  return out;
}

// --- failover -----------------------------------------------------------

namespace {

struct HookedApp : cl::Application {
  std::function<void(long long)> killed;
  std::function<void(long long)> restarted;
  void on_driver_killed(long long t_ms) override {
    if (killed) killed(t_ms);
  }
  void on_driver_restarted(long long t_ms) override {
    if (restarted) restarted(t_ms);
  }
  int required_slots() const override { return 2; }  // one receiver core + one task slot
};

struct FailoverRun {
  RunReport report;
  std::vector<st::BatchStats> stats;  // non-replayed, across driver generations
  std::map<std::string, int> per_seq;
  long long sent = 0;
  cl::ClusterMetrics metrics;
  std::vector<std::pair<long long, bool>> master_kills;  // (t, was_leader)
  long long restart_delay_ms = 0;
};

FailoverRun execute_failover(const cl::FaultPlan& plan, const LoadScenario& scenario, int rate,
                             int seconds, const ExperimentConfig& cfg) {
  th::Broker broker;
  cl::SimClock clk;
  cl::ClusterConfig ccfg;
  ccfg.n_workers = 3;
  ccfg.slots_per_worker = cfg.slots_per_worker;
  ccfg.n_masters = 3;
  ccfg.seed = cfg.seed;
  cl::Cluster cluster(ccfg, &clk);

  st::StreamingConfig scfg;
  scfg.group = "failover";
  scfg.checkpoint_every_ms = 10000;
  if (cfg.scratch_dir.empty()) throw HarnessError("failover needs a scratch dir");
  // each run gets a fresh directory: a restore must never see another run's log
  static std::atomic<long long> run_counter{0};
  std::string run_dir = cfg.scratch_dir + "/run-" + std::to_string(run_counter.fetch_add(1));
  std::filesystem::remove_all(run_dir);
  std::filesystem::create_directories(run_dir);
  scfg.wal_path = run_dir + "/events.wal";
  scfg.checkpoint_dir = run_dir + "/snapshots";
  scfg.replication_factor = 2;

  FailoverRun run;
  run.restart_delay_ms = ccfg.driver_restart_delay_ms;

  std::set<long long> batches_seen;
  std::unique_ptr<st::StreamingContext> sctx;
  auto declare = [&](st::StreamingContext& s) {
    s.engine().costs().per_element_ms = cfg.per_element_ms;
    register_decode(s);
    s.add_sink("audit", [&](long long batch_id, const std::vector<Value>& items) {
      if (!batches_seen.insert(batch_id).second) return;  // replayed batch: already applied
      for (const auto& item : items) ++run.per_seq[item.at("readings").at("SEQ").get<std::string>()];
    });
    auto rel = cfg.reliable ? st::Reliability::Reliable : st::Reliability::Unreliable;
    s.foreach_batch(s.flat_map(s.receiver_stream(kTopic, kTopic, 1000, rel), "decode"), "audit");
  };
  auto snapshot_stats = [&] {
    if (!sctx) return;
    for (const auto& b : sctx->history())
      if (!b.replayed) run.stats.push_back(b);
  };

  HookedApp app;
  app.killed = [&](long long t_ms) {
    if (sctx && sctx->running()) {
      sctx->on_driver_killed(t_ms);
      snapshot_stats();
    }
  };
  app.restarted = [&](long long t_ms) {
    sctx = std::make_unique<st::StreamingContext>(&broker, scfg, &cluster);
    declare(*sctx);
    sctx->restore(t_ms);
  };
  cluster.submit_application(&app);

  sctx = std::make_unique<st::StreamingContext>(&broker, scfg, &cluster);
  declare(*sctx);
  sctx->start(0);

  MessageGenerator gen(scenario, cfg.seed);
  auto next_fault = plan.begin();
  // trailing quiet seconds let the backlog drain before the audit
  int horizon = seconds + static_cast<int>(run.restart_delay_ms / 1000) + 8;
  for (long long t = 1; t <= horizon; ++t) {
    long long t_ms = t * 1000;
    if (t <= seconds) publish_tick(broker, gen, t - 1, rate);
    while (next_fault != plan.end() && next_fault->t_ms <= t_ms) {
      if (next_fault->kind == cl::FaultKind::KillMaster)
        run.master_kills.push_back({next_fault->t_ms, cluster.leader() == next_fault->node});
      cluster.inject_fault(*next_fault);
      if (next_fault->kind == cl::FaultKind::KillWorker && sctx && sctx->running())
        sctx->on_worker_killed(next_fault->node, next_fault->t_ms);
      ++next_fault;
    }
    clk.now_ms = t_ms;
    cluster.process_until(t_ms);
    if (sctx && sctx->running()) sctx->advance(t_ms);

    ReportRow row;
    if (sctx && sctx->running()) {
      row = row_for_tick(*sctx, t_ms, rate, static_cast<int>(cluster.pool().alive_workers().size()));
    } else {
      row.ts_ms = t_ms;
      row.target_rate = rate;
      row.workers = static_cast<int>(cluster.pool().alive_workers().size());
    }
    run.report.rows.push_back(row);
  }
  snapshot_stats();
  run.sent = gen.total_generated();
  run.metrics = cluster.metrics();
  std::sort(run.stats.begin(), run.stats.end(),
            [](const st::BatchStats& a, const st::BatchStats& b) { return a.batch_id < b.batch_id; });
  return run;
}

}  // namespace

FailoverOutcome run_failover_experiment(const cl::FaultPlan& plan, const LoadScenario& scenario,
                                        int rate, int seconds, const ExperimentConfig& cfg) {
  auto sorted = plan;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const cl::FaultEvent& a, const cl::FaultEvent& b) { return a.t_ms < b.t_ms; });
  auto run = execute_failover(sorted, scenario, rate, seconds, cfg);

  FailoverOutcome out;
  out.report = std::move(run.report);
  out.sent = run.sent;
  for (const auto& [seq, n] : run.per_seq) {
    (void)seq;
    if (n == 1) ++out.delivered_once;
    if (n > 1) out.duplicates += n - 1;
  }
  out.losses = run.sent - static_cast<long long>(run.per_seq.size());

  bool all_ok = true;
  auto check = [&](bool ok, const std::string& what) {
    out.checks.push_back(std::string(ok ? "PASS " : "FAIL ") + what);
    all_ok = all_ok && ok;
  };

  if (cfg.reliable) {
    check(out.duplicates == 0 && out.losses == 0 && out.delivered_once == out.sent,
          "exactly-once: " + std::to_string(out.delivered_once) + "/" + std::to_string(out.sent) +
              " ids delivered once, " + std::to_string(out.duplicates) + " duplicates, " +
              std::to_string(out.losses) + " losses");
  } else {
    check(out.duplicates == 0, "at-most-once: 0 duplicates (" + std::to_string(out.losses) +
                                   " losses over " + std::to_string(out.sent) + " sent)");
  }

  for (const auto& e : sorted) {
    if (e.kind != cl::FaultKind::KillWorker) continue;
    std::vector<double> before;
    const st::BatchStats* hit = nullptr;
    for (const auto& b : run.stats) {
      if (b.finish_ms <= e.t_ms)
        before.push_back(b.duration_ms);
      else if (!hit)
        hit = &b;
    }
    double median = 0;
    if (!before.empty()) {
      std::sort(before.begin(), before.end());
      median = before[before.size() / 2];
    }
    bool spiked = hit && median > 0 && hit->duration_ms >= 3.0 * median;
    check(spiked, "worker-kill spike at t=" + std::to_string(e.t_ms) + ": batch " +
                      (hit ? std::to_string(hit->batch_id) : std::string("<none>")) + " took " +
                      (hit ? fixed3(hit->duration_ms) : std::string("-")) + " ms vs median " +
                      fixed3(median));
    check(run.metrics.recomputed_stages >= 1, "worker-kill recomputation: recomputed_stages = " +
                                                  std::to_string(run.metrics.recomputed_stages));
  }

  bool any_master = false;
  for (const auto& [t, was_leader] : run.master_kills) {
    any_master = true;
    if (was_leader)
      check(run.metrics.leader_elections >= 1,
            "leader handover at t=" + std::to_string(t) + ": elections = " +
                std::to_string(run.metrics.leader_elections));
  }
  if (any_master) {
    cl::FaultPlan twin_plan;
    for (const auto& e : sorted)
      if (e.kind != cl::FaultKind::KillMaster) twin_plan.push_back(e);
    auto twin = execute_failover(twin_plan, scenario, rate, seconds, cfg);
    bool same = run.stats.size() == twin.stats.size();
    for (std::size_t i = 0; same && i < run.stats.size(); ++i) {
      const auto& a = run.stats[i];
      const auto& b = twin.stats[i];
      same = a.batch_id == b.batch_id && a.seal_ms == b.seal_ms && a.start_ms == b.start_ms &&
             a.finish_ms == b.finish_ms && a.duration_ms == b.duration_ms &&
             a.received == b.received && a.processed == b.processed;
    }
    check(same, "master-kill transparency: per-batch stats identical to the fault-free twin (" +
                    std::to_string(run.stats.size()) + " batches)");
  }

  for (const auto& e : sorted) {
    if (e.kind != cl::FaultKind::KillDriver) continue;
    long long restart = e.t_ms + run.restart_delay_ms;
    bool gap = true;
    const st::BatchStats* first_after = nullptr;
    for (const auto& b : run.stats) {
      if (b.seal_ms > e.t_ms && b.seal_ms < restart) gap = false;
      if (b.seal_ms > e.t_ms && !first_after) first_after = &b;
    }
    check(gap, "driver-kill outage: no batch sealed during the restart window after t=" +
                   std::to_string(e.t_ms));
    bool burst = first_after && first_after->received > rate;
    check(burst, "driver-kill catch-up burst: first batch after restart received " +
                     (first_after ? std::to_string(first_after->received) : std::string("-")) +
                     " > rate " + std::to_string(rate));
    check(run.metrics.driver_restarts >= 1,
          "driver restart happened: restarts = " + std::to_string(run.metrics.driver_restarts));
  }

  out.pass = all_ok;
  return out;
}

// --- state census -------------------------------------------------------

CensusResult run_state_census(const LoadScenario& scenario, int rate, int seconds,
                              const ExperimentConfig& cfg) {
  th::Broker broker;
  st::StreamingConfig scfg;
  scfg.group = "census";
  st::StreamingContext sctx(&broker, scfg);
  // no fuel filter here: the census counts every vehicle that reported at all
  auto pipe = declare_trip_pipeline(sctx, st::Reliability::Unreliable, false);
  sctx.add_sink("drain", [](long long, const std::vector<Value>&) {});
  sctx.foreach_batch(pipe.passes, "drain");
  sctx.start(0);

  MessageGenerator gen(scenario, cfg.seed);
  for (long long t = 1; t <= seconds; ++t) {
    publish_tick(broker, gen, t - 1, rate);
    sctx.advance(t * 1000);
  }
  CensusResult res;
  res.live_states = static_cast<long long>(sctx.state_size(pipe.gated));
  res.distinct_vehicles = gen.distinct_vehicles();
  res.messages = gen.total_generated();
  return res;
}

// --- stage demo ---------------------------------------------------------

std::vector<std::string> stage_demo_plan() {
  eng::Context ctx;
  ctx.fns().add_flat_map("split_words", [](const Value& v) {
    std::vector<Value> words;
    std::istringstream in(v.get<std::string>());
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
  });
  ctx.fns().add_map("pair_with_one", [](const Value& v) { return Value{v, 1}; });
  ctx.fns().add_reduce("sum_counts", [](const Value& a, const Value& b) {
    return Value(a.get<long long>() + b.get<long long>());
  });

  std::vector<Value> lines = {"to be or not to be", "that is the question"};
  auto counts = ctx.reduce_by_key(
      ctx.map(ctx.flat_map(ctx.parallelize(lines, 2), "split_words"), "pair_with_one"),
      "sum_counts");
  auto nodes = ctx.nodes_snapshot();
  std::vector<std::string> out;
  for (const auto& stage : ctx.build_stages(counts)) out.push_back(stage.describe(nodes));
  return out;
}

// --- one-shot file pipeline ----------------------------------------------

RecommendRunStats run_recommend_files(const std::string& stations_csv,
                                      const std::string& prices_csv,
                                      const std::string& readings_jsonl, std::ostream& out) {
  auto stations = cis::load_station_csv(stations_csv);
  auto events = cis::load_price_csv(prices_csv);
  auto index = cis::StationIndex::build(std::move(stations));

  cis::PriceHistory history;
  history.add_all(events);

  // point-in-time quotes from the same event series
  std::map<std::pair<std::string, cis::FuelKind>, std::vector<std::pair<long long, double>>> series;
  for (const auto& e : events) series[{e.station_id, e.fuel}].push_back({e.effective_from_ms, e.price});
  for (auto& [key, v] : series) {
    (void)key;
    std::sort(v.begin(), v.end());
  }
  long long quote_now = 0;
  cis::PriceCache cache(
      [&](const std::string& station_id) -> std::optional<cis::PriceTable> {
        cis::PriceTable table;
        for (auto kind : {cis::FuelKind::e5, cis::FuelKind::e10, cis::FuelKind::diesel}) {
          auto it = series.find({station_id, kind});
          if (it == series.end()) continue;
          double price = 0;
          bool set = false;
          for (const auto& [ts, p] : it->second) {
            if (ts > quote_now) break;
            price = p;
            set = true;
          }
          if (set) table[kind] = price;
        }
        if (table.empty()) return std::nullopt;
        return table;
      },
      0);

  std::ifstream in(readings_jsonl);
  if (!in) throw HarnessError("cannot open '" + readings_jsonl + "'");

  cis::RecommenderConfig rc;
  cis::TripGate gate(rc.trip_gap_min * 60000LL);
  RecommendRunStats stats;
  out << "vehicle_id,ts,station_id,price,expected_cost,reason\n";
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++stats.readings;
    auto parsed = cis::parse_vehicle_reading(line);
    if (std::holds_alternative<cis::DeadLetter>(parsed)) {
      ++stats.dead_letters;
      continue;
    }
    const auto& r = std::get<cis::VehicleReading>(parsed);
    if (!cis::needs_fuel(r, rc.fuel_threshold_pct)) continue;
    ++stats.below_threshold;
    if (!gate.admit(r.vehicle_id, r.ts_ms)) continue;
    ++stats.admitted;

    quote_now = r.ts_ms;
    auto decision = cis::recommend_station(r, index, cache, history, rc);
    out << r.vehicle_id << ',' << r.ts_ms << ',';
    if (decision.pick) {
      ++stats.recommended;
      char price[32], cost[32];
      std::snprintf(price, sizeof price, "%.3f", decision.pick->price_per_liter);
      std::snprintf(cost, sizeof cost, "%.2f", decision.pick->expected_fill_cost);
      out << decision.pick->station_id << ',' << price << ',' << cost;
    } else {
      out << ",,";
    }
    out << ',' << decision.reason << '\n';
  }
  return stats;
}

}  // namespace thetastream::harness
