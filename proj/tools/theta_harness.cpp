#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "thetastream/cis/types.hpp"
#include "thetastream/harness/experiment.hpp"

namespace fs = std::filesystem;
namespace hn = thetastream::harness;
namespace cl = thetastream::cluster;

namespace {

hn::LoadScenario scenario_from(const std::string& name, int fleet) {
  if (name == "ls1") return hn::single_vehicle_scenario();
  if (name == "ls2") return hn::fleet_scenario(fleet);
  if (name == "ls3") return hn::all_distinct_scenario();
  return hn::gas_search_scenario();
}

// plan file: JSON array of {"t_ms": N, "event": "kill_worker|kill_master|kill_driver", "node": "w1"}
cl::FaultPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hn::HarnessError("cannot open plan '" + path + "'");
  auto doc = thetastream::engine::Value::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_array())
    throw hn::HarnessError("plan '" + path + "' must be a JSON array of fault events");
  cl::FaultPlan plan;
  for (const auto& e : doc) {
    if (!e.is_object() || !e.contains("t_ms") || !e.contains("event"))
      throw hn::HarnessError("plan entries need t_ms and event fields");
    cl::FaultEvent ev;
    ev.t_ms = e.at("t_ms").get<long long>();
    const std::string kind = e.at("event").get<std::string>();
    if (kind == "kill_worker")
      ev.kind = cl::FaultKind::KillWorker;
    else if (kind == "kill_master")
      ev.kind = cl::FaultKind::KillMaster;
    else if (kind == "kill_driver")
      ev.kind = cl::FaultKind::KillDriver;
    else
      throw hn::HarnessError("unknown event '" + kind + "' in plan");
    if (e.contains("node")) ev.node = e.at("node").get<std::string>();
    if (ev.kind != cl::FaultKind::KillDriver && ev.node.empty())
      throw hn::HarnessError("event '" + kind + "' needs a node");
    plan.push_back(ev);
  }
  return plan;
}

void print_stats(std::ostream& os, const hn::RecommendRunStats& s) {
  os << "readings=" << s.readings << " dead_letters=" << s.dead_letters
     << " below_threshold=" << s.below_threshold << " admitted=" << s.admitted
     << " recommended=" << s.recommended << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"micro-batch streaming harness: load sweeps, fault drills, file recommendations"};
  app.require_subcommand(1);

  std::string scenario = "gas-search";
  int fleet = 1000;
  unsigned long long seed = 1;
  double per_element = 0.5;
  int slots = 2;
  std::string out_path;

  auto* load = app.add_subcommand("load", "sweep input rates until the backlog grows");
  std::vector<int> workers{1, 2, 4};
  hn::RateSchedule sch;
  load->add_option("--scenario", scenario, "ls1 | ls2 | ls3 | gas-search")
      ->check(CLI::IsMember({"ls1", "ls2", "ls3", "gas-search"}));
  load->add_option("--fleet", fleet, "fleet size for ls2")->check(CLI::PositiveNumber);
  load->add_option("--workers", workers, "worker counts to sweep")->delimiter(',');
  load->add_option("--start", sch.start_rate, "first rate, msg/s");
  load->add_option("--step", sch.step, "rate increment, msg/s");
  load->add_option("--max", sch.max_rate, "last rate, msg/s");
  load->add_option("--dwell", sch.dwell_s, "seconds per rate step");
  load->add_option("--seed", seed, "generator and placement seed");
  load->add_option("--per-element", per_element, "modeled cost per element, ms");
  load->add_option("--slots", slots, "task slots per worker");
  load->add_option("--out", out_path, "write the per-tick report csv here");

  auto* failover = app.add_subcommand("failover", "inject faults and audit delivery");
  std::string plan_path, scratch_dir;
  int rate = 1000, seconds = 30;
  bool unreliable = false;
  failover->add_option("--plan", plan_path, "JSON fault plan")->required();
  failover->add_option("--scenario", scenario, "ls1 | ls2 | ls3 | gas-search")
      ->check(CLI::IsMember({"ls1", "ls2", "ls3", "gas-search"}));
  failover->add_option("--fleet", fleet, "fleet size for ls2")->check(CLI::PositiveNumber);
  failover->add_option("--rate", rate, "input rate, msg/s")->check(CLI::PositiveNumber);
  failover->add_option("--seconds", seconds, "seconds of input")->check(CLI::PositiveNumber);
  failover->add_option("--seed", seed, "generator and placement seed");
  failover->add_option("--scratch", scratch_dir, "directory for logs and snapshots");
  failover->add_option("--out", out_path, "write the per-tick report csv here");
  failover->add_flag("--unreliable", unreliable, "use the fire-and-forget receiver");

  auto* recommend = app.add_subcommand("recommend", "run the refuelling pipeline over files");
  std::string stations_path, prices_path, input_path;
  recommend->add_option("--stations", stations_path, "station csv")->required();
  recommend->add_option("--prices", prices_path, "price event csv")->required();
  recommend->add_option("--input", input_path, "vehicle readings, one JSON doc per line")
      ->required();
  recommend->add_option("--out", out_path, "write the recommendation csv here (default stdout)");

  auto* stages = app.add_subcommand("stages", "print the stage plan of the word-count demo");
  bool demo = false;
  stages->add_flag("--demo", demo, "print the demo plan (default action)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad usage is 2; --help stays 0
  }

  try {
    if (load->parsed()) {
      hn::ExperimentConfig cfg;
      cfg.seed = seed;
      cfg.per_element_ms = per_element;
      cfg.slots_per_worker = slots;
      auto out = hn::run_scaling_experiment(workers, scenario_from(scenario, fleet), sch, cfg);
      if (!out_path.empty()) hn::write_report_csv(out.report, out_path);
      for (const auto& [w, r] : out.max_sustainable)
        std::cout << "workers=" << w << " max_sustainable_rate=" << r << "\n";
      return 0;
    }

    if (failover->parsed()) {
      hn::ExperimentConfig cfg;
      cfg.seed = seed;
      cfg.per_element_ms = per_element;
      cfg.slots_per_worker = slots;
      cfg.reliable = !unreliable;
      cfg.scratch_dir = scratch_dir.empty()
                            ? (fs::temp_directory_path() / "theta_harness_scratch").string()
                            : scratch_dir;
      auto plan = load_plan(plan_path);
      auto out =
          hn::run_failover_experiment(plan, scenario_from(scenario, fleet), rate, seconds, cfg);
      if (!out_path.empty()) hn::write_report_csv(out.report, out_path);
      for (const auto& c : out.checks) std::cout << c << "\n";
      std::cout << "sent=" << out.sent << " delivered_once=" << out.delivered_once
                << " duplicates=" << out.duplicates << " losses=" << out.losses << "\n";
      std::cout << "VERDICT: " << (out.pass ? "PASS" : "FAIL") << "\n";
      return out.pass ? 0 : 1;
    }

    if (recommend->parsed()) {
      if (out_path.empty()) {
        print_stats(std::cerr, hn::run_recommend_files(stations_path, prices_path, input_path,
                                                       std::cout));
      } else {
        std::ofstream f(out_path, std::ios::binary);
        if (!f) throw hn::HarnessError("cannot write '" + out_path + "'");
        print_stats(std::cout,
                    hn::run_recommend_files(stations_path, prices_path, input_path, f));
      }
      return 0;
    }

    if (stages->parsed()) {
      for (const auto& line : hn::stage_demo_plan()) std::cout << line << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
