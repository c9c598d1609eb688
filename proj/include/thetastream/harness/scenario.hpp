#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace thetastream::harness {

// The four canned load profiles. SingleVehicle stresses keyed state with one
// hot key; Fleet models n vehicles reporting about once a second; AllDistinct
// makes every message a new vehicle (worst-case state growth); GasSearch is
// AllDistinct shaped for the stateless station-search pipeline, every message
// below the fuel threshold.
enum class ScenarioKind { SingleVehicle, Fleet, AllDistinct, GasSearch };

struct LoadScenario {
  ScenarioKind kind = ScenarioKind::AllDistinct;
  int fleet_size = 1000;  // Fleet only
  double min_lat = 47.0, max_lat = 55.0;
  double min_lon = 6.0, max_lon = 15.0;
  double fuel_min = 5.0, fuel_max = 95.0;
};

LoadScenario single_vehicle_scenario();
LoadScenario fleet_scenario(int n_vehicles);
LoadScenario all_distinct_scenario();
LoadScenario gas_search_scenario();

struct GeneratedMessage {
  std::string message_id;  // globally unique, doubles as the delivery audit key
  std::string vehicle_id;
  long long offset_ms = 0;  // position inside the tick's second
  std::string payload;      // one vehicle JSON document
};

// Deterministic message source: same (scenario, seed, tick sequence), same
// bytes. Each document carries a unique SEQ reading for end-to-end audits.
class MessageGenerator {
 public:
  static constexpr long long kBaseTsMs = 1465290000000LL;  // virtual epoch of every run

  MessageGenerator(LoadScenario scenario, unsigned long long seed);

  // Exactly `rate` documents for virtual second `tick`, ordered by offset.
  std::vector<GeneratedMessage> tick(long long tick_index, int rate);

  long long total_generated() const { return seq_; }
  long long distinct_vehicles() const;

 private:
  struct Walk {
    double lat = 0, lon = 0;
  };
  Walk& walker(const std::string& vehicle_id);
  void step(Walk& w);

  LoadScenario sc_;
  std::mt19937_64 rng_;
  std::unordered_map<std::string, Walk> walks_;
  long long seq_ = 0;
  std::size_t fleet_cursor_ = 0;
};

}  // namespace thetastream::harness
