#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "thetastream/cluster/cluster.hpp"
#include "thetastream/harness/scenario.hpp"

namespace thetastream::harness {

struct HarnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One row per virtual second; received/processed/batch_ms describe the batch
// sealed at ts (zeros while the driver is down or the batch is empty).
struct ReportRow {
  long long ts_ms = 0;
  int target_rate = 0;
  long long received = 0;
  long long processed = 0;
  double batch_ms = 0.0;
  int waiting_batches = 0;
  int workers = 0;
};

struct RunReport {
  std::vector<ReportRow> rows;
};

// Header ts,target_rate,received,processed,batch_ms,waiting_batches,workers;
// LF endings, dot decimals. Same report, same bytes.
void write_report_csv(const RunReport& report, const std::string& path);
void write_report_csv(const RunReport& report, std::ostream& out);

struct RateSchedule {
  int start_rate = 500;
  int step = 500;
  int max_rate = 10000;
  int dwell_s = 30;  // seconds per rate step
};

struct ExperimentConfig {
  unsigned long long seed = 1;
  double per_element_ms = 0.5;  // modeled cost per element per operator
  int slots_per_worker = 2;
  std::string scratch_dir;  // WAL + snapshot home for failover runs
  bool reliable = true;     // failover receiver mode
};

struct ScalingOutcome {
  // worker count -> highest rate whose backlog did not grow over the dwell
  // (0: even the first step overloaded).
  std::map<int, int> max_sustainable;
  RunReport report;
};

// Steps the rate per schedule for each worker count on a fresh simulated
// cluster, stopping a sweep at the first unsustainable rate.
ScalingOutcome run_scaling_experiment(const std::vector<int>& worker_counts,
                                      const LoadScenario& scenario, const RateSchedule& schedule,
                                      const ExperimentConfig& cfg);

struct FailoverOutcome {
  RunReport report;
  bool pass = false;
  std::vector<std::string> checks;  // one PASS/FAIL line per verdict clause
  long long sent = 0;
  long long delivered_once = 0;  // distinct messages seen exactly once
  long long duplicates = 0;
  long long losses = 0;
};

// Runs the scenario at a fixed rate on a supervised 3-master cluster with a
// logged receiver and periodic snapshots, injecting the plan's faults, then
// audits delivery and the per-role failure signatures.
FailoverOutcome run_failover_experiment(const cluster::FaultPlan& plan,
                                        const LoadScenario& scenario, int rate, int seconds,
                                        const ExperimentConfig& cfg);

struct CensusResult {
  long long live_states = 0;
  long long distinct_vehicles = 0;
  long long messages = 0;
};

// Feeds the keyed trip pipeline and reports live state entries afterwards.
CensusResult run_state_census(const LoadScenario& scenario, int rate, int seconds,
                              const ExperimentConfig& cfg);

// Stage plan of the introductory word-count pipeline, one line per stage.
std::vector<std::string> stage_demo_plan();

struct RecommendRunStats {
  long long readings = 0;
  long long dead_letters = 0;
  long long below_threshold = 0;  // readings that passed the fuel filter
  long long admitted = 0;         // first-of-trip readings reaching the recommender
  long long recommended = 0;
};

// One-shot batch run of the recommendation pipeline over files: stations and
// price events from CSV, one vehicle document per input line. Writes a CSV of
// outcomes for every admitted reading.
RecommendRunStats run_recommend_files(const std::string& stations_csv,
                                      const std::string& prices_csv,
                                      const std::string& readings_jsonl, std::ostream& out);

}  // namespace thetastream::harness
