#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "thetastream/engine/value.hpp"

namespace thetastream::cis {

struct CisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StationNotFound : CisError {
  explicit StationNotFound(const std::string& id) : CisError("no price source for station '" + id + "'") {}
};

struct NoHistory : CisError {
  explicit NoHistory(const std::string& id) : CisError("no past price for station '" + id + "'") {}
};

struct DuplicateStationId : CisError {
  explicit DuplicateStationId(const std::string& id) : CisError("duplicate station id '" + id + "'") {}
};

enum class FuelKind { e5, e10, diesel };

const char* to_string(FuelKind kind);
std::optional<FuelKind> fuel_kind_from(const std::string& name);

// One decoded telemetry message. The raw key/value payload is kept verbatim;
// fuel_pct is only set when FUEL_LEVEL decoded to a percentage in [0, 100].
struct VehicleReading {
  std::string vehicle_id;
  long long ts_ms = 0;
  double lat = 0.0;
  double lon = 0.0;
  double alt_m = 0.0;
  std::map<std::string, std::string> readings;
  std::optional<double> fuel_pct;
};

// Input that could not be decoded, routed to a dead-letter channel instead of
// failing the stream.
struct DeadLetter {
  std::string raw;
  std::string reason;
};

struct GasStation {
  std::string station_id;
  std::string name;
  double lat = 0.0;
  double lon = 0.0;
};

struct PriceEvent {
  std::string station_id;
  FuelKind fuel = FuelKind::e5;
  double price = 0.0;           // currency per liter
  long long effective_from_ms = 0;
};

// Time-weighted price summary over a lookback window.
struct PriceStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct RecommenderConfig {
  double radius_km = 10.0;
  double fuel_threshold_pct = 50.0;  // readings at or above never reach the recommender
  double critical_fuel_pct = 20.0;   // at or below: refuel now even at a bad price
  double tank_capacity_l = 50.0;
  double consumption_l_per_km = 0.07;
  int lookback_days = 7;
  int price_cache_ttl_s = 300;
  int trip_gap_min = 30;
  FuelKind fuel_kind = FuelKind::e5;
};

struct Recommendation {
  std::string vehicle_id;
  std::string station_id;
  double distance_km = 0.0;
  double price_per_liter = 0.0;
  double expected_fill_cost = 0.0;  // fill-up plus the detour's share of fuel
  std::string reason;               // good_price | low_fuel
};

// reason is always set: good_price | low_fuel | wait_for_drop | no_station |
// no_price. pick is present exactly for the first two.
struct RecommendOutcome {
  std::optional<Recommendation> pick;
  std::string reason;
};

// JSON round-trip so readings can travel through the streaming engine.
engine::Value to_value(const VehicleReading& r);
VehicleReading reading_from_value(const engine::Value& v);

}  // namespace thetastream::cis
