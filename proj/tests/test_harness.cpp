#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "doctest.h"
#include "thetastream/cis/parse.hpp"
#include "thetastream/cis/trip.hpp"
#include "thetastream/harness/experiment.hpp"

namespace fs = std::filesystem;
namespace hn = thetastream::harness;
namespace cl = thetastream::cluster;
namespace cis = thetastream::cis;
using thetastream::engine::Value;

namespace {

fs::path scratch(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("ts_harness_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

cis::VehicleReading must_parse(const std::string& payload) {
  auto parsed = cis::parse_vehicle_reading(payload);
  REQUIRE(std::holds_alternative<cis::VehicleReading>(parsed));
  return std::get<cis::VehicleReading>(parsed);
}

std::string csv_bytes(const hn::RunReport& r) {
  std::ostringstream os;
  hn::write_report_csv(r, os);
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("single-vehicle generator spaces one vehicle evenly across the second") {
  hn::MessageGenerator gen(hn::single_vehicle_scenario(), 7);
  auto msgs = gen.tick(0, 100);
  REQUIRE(msgs.size() == 100);
  for (int i = 0; i < 100; ++i) {
    CHECK(msgs[i].vehicle_id == "veh-0");
    CHECK(msgs[i].offset_ms == 10 * i);
    auto r = must_parse(msgs[i].payload);
    CHECK(r.vehicle_id == "veh-0");
    CHECK(r.ts_ms == hn::MessageGenerator::kBaseTsMs + msgs[i].offset_ms);
    REQUIRE(r.fuel_pct.has_value());
    CHECK(*r.fuel_pct >= 5.0);
    CHECK(*r.fuel_pct <= 95.0);
    CHECK(r.readings.at("SEQ") == std::to_string(i));
  }
  auto next = gen.tick(1, 50);
  CHECK(must_parse(next[0].payload).ts_ms == hn::MessageGenerator::kBaseTsMs + 1000);
  CHECK(must_parse(next[0].payload).readings.at("SEQ") == "100");
  CHECK(gen.total_generated() == 150);
  CHECK(gen.distinct_vehicles() == 1);
}

TEST_CASE("fleet generator rotates through the fleet with bounded jitter") {
  hn::MessageGenerator gen(hn::fleet_scenario(500), 3);

  for (int tick = 0; tick < 2; ++tick) {
    auto msgs = gen.tick(tick, 500);
    REQUIRE(msgs.size() == 500);
    std::map<std::string, int> seen;
    long long prev = -1;
    for (const auto& m : msgs) {
      seen[m.vehicle_id]++;
      CHECK(m.offset_ms >= 0);
      CHECK(m.offset_ms <= 999);
      CHECK(m.offset_ms >= prev);
      prev = m.offset_ms;
      auto r = must_parse(m.payload);
      CHECK(r.ts_ms == hn::MessageGenerator::kBaseTsMs + tick * 1000 + m.offset_ms);
    }
    CHECK(seen.size() == 500);  // exact coverage: every vehicle exactly once per tick
    for (const auto& [id, n] : seen) {
      (void)id;
      CHECK(n == 1);
    }
  }
  CHECK(gen.distinct_vehicles() == 500);

  // a slower rate still covers the fleet, two messages per vehicle after 5 ticks
  hn::MessageGenerator slow(hn::fleet_scenario(500), 3);
  std::map<std::string, int> seen;
  for (int tick = 0; tick < 5; ++tick)
    for (const auto& m : slow.tick(tick, 200)) seen[m.vehicle_id]++;
  CHECK(seen.size() == 500);
  for (const auto& [id, n] : seen) {
    (void)id;
    CHECK(n == 2);
  }
}

TEST_CASE("distinct-vehicle generator never reuses an id and stays below the fuel threshold") {
  hn::MessageGenerator gen(hn::all_distinct_scenario(), 5);
  std::set<std::string> ids;
  for (int tick = 0; tick < 2; ++tick) {
    for (const auto& m : gen.tick(tick, 1000)) {
      ids.insert(m.vehicle_id);
      auto r = must_parse(m.payload);
      REQUIRE(r.fuel_pct.has_value());
      CHECK(cis::needs_fuel(r, 50.0));
    }
  }
  CHECK(ids.size() == 2000);
  CHECK(gen.distinct_vehicles() == 2000);
  CHECK(gen.total_generated() == 2000);

  hn::MessageGenerator gas(hn::gas_search_scenario(), 5);
  for (const auto& m : gas.tick(0, 200)) CHECK(cis::needs_fuel(must_parse(m.payload), 50.0));
}

TEST_CASE("generation is deterministic per seed and varies across seeds") {
  hn::MessageGenerator a(hn::fleet_scenario(40), 99);
  hn::MessageGenerator b(hn::fleet_scenario(40), 99);
  hn::MessageGenerator c(hn::fleet_scenario(40), 100);
  std::string sa, sb, sc;
  for (int tick = 0; tick < 3; ++tick) {
    for (const auto& m : a.tick(tick, 333)) sa += m.message_id + "|" + m.payload + "\n";
    for (const auto& m : b.tick(tick, 333)) sb += m.message_id + "|" + m.payload + "\n";
    for (const auto& m : c.tick(tick, 333)) sc += m.message_id + "|" + m.payload + "\n";
  }
  CHECK(sa == sb);
  CHECK(sa != sc);

  CHECK_THROWS_AS((void)a.tick(3, 0), hn::HarnessError);
}

TEST_CASE("run reports serialize to a frozen csv shape") {
  hn::RunReport empty;
  CHECK(csv_bytes(empty) == "ts,target_rate,received,processed,batch_ms,waiting_batches,workers\n");

  hn::RunReport r;
  r.rows.push_back({1000, 500, 500, 498, 12.345, 0, 2});
  r.rows.push_back({2000, 500, 500, 500, 7.5, 1, 2});
  CHECK(csv_bytes(r) ==
        "ts,target_rate,received,processed,batch_ms,waiting_batches,workers\n"
        "1000,500,500,498,12.345,0,2\n"
        "2000,500,500,500,7.500,1,2\n");

  auto dir = scratch("csv");
  auto p1 = dir / "a.csv";
  auto p2 = dir / "b.csv";
  hn::write_report_csv(r, p1.string());
  hn::write_report_csv(r, p2.string());
  auto bytes = slurp(p1);
  CHECK(bytes == slurp(p2));
  CHECK(bytes == csv_bytes(r));
  CHECK(bytes.find('\r') == std::string::npos);
}

TEST_CASE("word-count plan pipelines the narrow ops and splits at the shuffle") {
  auto plan = hn::stage_demo_plan();
  REQUIRE(plan.size() == 2);
  CHECK(plan[0].find("source") != std::string::npos);
  CHECK(plan[0].find("flatMap") != std::string::npos);
  CHECK(plan[0].find("map") != std::string::npos);
  CHECK(plan[0].find("=> shuffle") != std::string::npos);
  CHECK(plan[0].find("reduceByKey") == std::string::npos);
  CHECK(plan[1].find("reduceByKey") != std::string::npos);
  CHECK(plan[1].find("<- stages[0]") != std::string::npos);
}

TEST_CASE("scaling sweep finds a higher sustainable rate with more workers") {
  hn::RateSchedule sch;
  sch.start_rate = 400;
  sch.step = 400;
  sch.max_rate = 1200;
  sch.dwell_s = 3;
  hn::ExperimentConfig cfg;
  cfg.seed = 1;

  auto out = hn::run_scaling_experiment({1, 2}, hn::gas_search_scenario(), sch, cfg);
  REQUIRE(out.max_sustainable.count(1));
  REQUIRE(out.max_sustainable.count(2));
  CHECK(out.max_sustainable.at(1) < out.max_sustainable.at(2));
  // slots x 1000ms budget vs ~2ms of modeled work per message end-to-end
  CHECK(out.max_sustainable.at(1) == 400);
  CHECK(out.max_sustainable.at(2) == 1200);

  // one worker: 400 sustained + 800 aborted; two workers: the full sweep
  CHECK(out.report.rows.size() == 15);
  for (std::size_t i = 0; i < out.report.rows.size(); ++i) {
    const auto& row = out.report.rows[i];
    CHECK(row.workers == (i < 6 ? 1 : 2));
    CHECK(row.received == row.target_rate);
  }
  CHECK(out.report.rows[5].waiting_batches > 0);  // the overloaded dwell left a backlog

  auto again = hn::run_scaling_experiment({1, 2}, hn::gas_search_scenario(), sch, cfg);
  CHECK(csv_bytes(out.report) == csv_bytes(again.report));
  CHECK(again.max_sustainable == out.max_sustainable);

  CHECK_THROWS_AS(hn::run_scaling_experiment({}, hn::gas_search_scenario(), sch, cfg),
                  hn::HarnessError);
  hn::RateSchedule bad = sch;
  bad.step = 0;
  CHECK_THROWS_AS(hn::run_scaling_experiment({1}, hn::gas_search_scenario(), bad, cfg),
                  hn::HarnessError);
}

TEST_CASE("failover: losing a worker spikes the batch and re-runs its stages") {
  auto dir = scratch("fo_worker");
  hn::ExperimentConfig cfg;
  cfg.seed = 11;
  cfg.scratch_dir = dir.string();

  cl::FaultPlan plan{{15500, cl::FaultKind::KillWorker, "w1"}};
  auto out = hn::run_failover_experiment(plan, hn::fleet_scenario(50), 300, 25, cfg);
  CHECK(out.sent == 7500);
  CHECK(out.delivered_once == 7500);
  CHECK(out.duplicates == 0);
  CHECK(out.losses == 0);
  REQUIRE(out.checks.size() == 3);  // exactly-once, spike, recomputation
  for (const auto& c : out.checks) {
    INFO(c);
    CHECK(c.substr(0, 4) == "PASS");
  }
  CHECK(out.pass);
}

TEST_CASE("failover: losing the driver pauses sealing, then catches up without loss") {
  auto dir = scratch("fo_driver");
  hn::ExperimentConfig cfg;
  cfg.seed = 12;
  cfg.scratch_dir = dir.string();

  cl::FaultPlan plan{{12300, cl::FaultKind::KillDriver, ""}};
  auto out = hn::run_failover_experiment(plan, hn::fleet_scenario(50), 300, 25, cfg);
  CHECK(out.sent == 7500);
  CHECK(out.delivered_once == 7500);
  CHECK(out.duplicates == 0);
  CHECK(out.losses == 0);
  REQUIRE(out.checks.size() == 4);  // exactly-once, outage, burst, restart
  for (const auto& c : out.checks) {
    INFO(c);
    CHECK(c.substr(0, 4) == "PASS");
  }
  CHECK(out.pass);

  // rows emitted while the driver is down report no sealed batch
  bool saw_outage_row = false;
  for (const auto& row : out.report.rows)
    if (row.ts_ms > 12300 && row.ts_ms < 15300 && row.received == 0) saw_outage_row = true;
  CHECK(saw_outage_row);

  auto twin = hn::run_failover_experiment(plan, hn::fleet_scenario(50), 300, 25, cfg);
  CHECK(csv_bytes(out.report) == csv_bytes(twin.report));
  CHECK(out.checks == twin.checks);
}

TEST_CASE("failover: losing the leading master elects a standby and leaves batches untouched") {
  auto dir = scratch("fo_master");
  hn::ExperimentConfig cfg;
  cfg.seed = 13;
  cfg.scratch_dir = dir.string();

  cl::FaultPlan plan{{9000, cl::FaultKind::KillMaster, "m0"}};
  auto out = hn::run_failover_experiment(plan, hn::fleet_scenario(50), 300, 20, cfg);
  CHECK(out.sent == 6000);
  CHECK(out.delivered_once == 6000);
  REQUIRE(out.checks.size() == 3);  // exactly-once, handover, twin equality
  for (const auto& c : out.checks) {
    INFO(c);
    CHECK(c.substr(0, 4) == "PASS");
  }
  CHECK(out.pass);
}

TEST_CASE("failover: the unreliable twin stays duplicate-free") {
  auto dir = scratch("fo_unreliable");
  hn::ExperimentConfig cfg;
  cfg.seed = 14;
  cfg.scratch_dir = dir.string();
  cfg.reliable = false;

  cl::FaultPlan plan{{12300, cl::FaultKind::KillDriver, ""}};
  auto out = hn::run_failover_experiment(plan, hn::fleet_scenario(50), 300, 20, cfg);
  CHECK(out.duplicates == 0);
  CHECK(out.losses >= 0);
  REQUIRE(!out.checks.empty());
  INFO(out.checks[0]);
  CHECK(out.checks[0].substr(0, 4) == "PASS");
}

TEST_CASE("state census counts exactly one live state per reporting vehicle") {
  hn::ExperimentConfig cfg;
  cfg.seed = 3;

  auto distinct = hn::run_state_census(hn::all_distinct_scenario(), 200, 5, cfg);
  CHECK(distinct.messages == 1000);
  CHECK(distinct.distinct_vehicles == 1000);
  CHECK(distinct.live_states == 1000);

  auto fleet = hn::run_state_census(hn::fleet_scenario(300), 150, 4, cfg);
  CHECK(fleet.messages == 600);
  CHECK(fleet.distinct_vehicles == 300);
  CHECK(fleet.live_states == 300);

  auto single = hn::run_state_census(hn::single_vehicle_scenario(), 50, 2, cfg);
  CHECK(single.messages == 100);
  CHECK(single.live_states == 1);
}

TEST_CASE("file pipeline emits a frozen recommendation report") {
  auto dir = scratch("files");
  const double lon5 = (5.0 / 6371.0) * (180.0 / M_PI);
  const double lon9 = (9.0 / 6371.0) * (180.0 / M_PI);
  const long long ts = 1465290000000;  // 2016-06-07T09:00:00Z

  {
    std::ofstream st(dir / "stations.csv");
    st << "station_id,name,latitude,longitude\n";
    char line[160];
    std::snprintf(line, sizeof line, "near,Close Station,0.0,%.17g\n", lon5);
    st << line;
    std::snprintf(line, sizeof line, "far,Cheap Station,0.0,%.17g\n", lon9);
    st << line;
    st << "pricey,Hilltop,30.0,20.0\n";
    st << "dark,Unpriced,60.0,5.0\n";
  }
  {
    std::ofstream pr(dir / "prices.csv");
    pr << "station_id,fuel,price,effective_from\n"
          "near,e5,1.55,2016-06-07T00:00:00Z\n"
          "far,e5,1.40,2016-06-07T00:00:00Z\n"
          "pricey,e5,1.30,2016-06-07T00:00:00Z\n"
          "pricey,e5,1.50,2016-06-07T06:00:00Z\n";
  }
  auto doc = [&](const std::string& vid, double lat, double lon, const std::string& fuel,
                 long long at) {
    Value v{{"vehicleid", vid},
            {"timestamp", at},
            {"latitude", lat},
            {"longitude", lon},
            {"altitude", 34.0},
            {"readings", Value{{"FUEL_LEVEL", fuel}}}};
    return v.dump();
  };
  {
    std::ofstream rd(dir / "readings.jsonl");
    rd << doc("car-1", 0.0, 0.0, "40.0", ts) << "\n";       // picks the cheaper total: far
    rd << doc("car-2", 0.0, 0.0, "80.0", ts) << "\n";       // tank full enough: filtered
    rd << "{nope\n";                                        // dead letter
    rd << doc("car-1", 0.0, 0.0, "38.0", ts + 600000) << "\n";  // same trip: gated
    rd << doc("car-3", 0.0, 0.0, "10.0", ts) << "\n";       // price still good: good_price
    rd << doc("car-4", 30.0, 20.0, "15.0", ts) << "\n";     // price above average, tank critical
    rd << doc("car-5", 30.0, 20.0, "45.0", ts) << "\n";     // price above average, can wait
    rd << doc("car-6", -60.0, 0.0, "30.0", ts) << "\n";     // nothing in range
    rd << doc("car-7", 60.0, 5.0, "30.0", ts) << "\n";      // station there, no quote
  }

  std::ostringstream out;
  auto stats = hn::run_recommend_files((dir / "stations.csv").string(), (dir / "prices.csv").string(),
                                       (dir / "readings.jsonl").string(), out);
  CHECK(out.str() ==
        "vehicle_id,ts,station_id,price,expected_cost,reason\n"
        "car-1,1465290000000,far,1.400,42.88,good_price\n"
        "car-3,1465290000000,far,1.400,63.88,good_price\n"
        "car-4,1465290000000,pricey,1.500,63.75,low_fuel\n"
        "car-5,1465290000000,,,,wait_for_drop\n"
        "car-6,1465290000000,,,,no_station\n"
        "car-7,1465290000000,,,,no_price\n");
  CHECK(stats.readings == 9);
  CHECK(stats.dead_letters == 1);
  CHECK(stats.below_threshold == 7);
  CHECK(stats.admitted == 6);
  CHECK(stats.recommended == 3);

  std::ostringstream sink;
  CHECK_THROWS_AS(hn::run_recommend_files((dir / "stations.csv").string(),
                                          (dir / "prices.csv").string(),
                                          (dir / "missing.jsonl").string(), sink),
                  hn::HarnessError);
  CHECK_THROWS_AS(hn::run_recommend_files((dir / "missing.csv").string(),
                                          (dir / "prices.csv").string(),
                                          (dir / "readings.jsonl").string(), sink),
                  cis::CisError);
}
