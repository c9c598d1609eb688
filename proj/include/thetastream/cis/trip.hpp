#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>

#include "thetastream/cis/types.hpp"
#include "thetastream/engine/functions.hpp"
#include "thetastream/stream/streaming.hpp"

namespace thetastream::cis {

// True when the reading carries a usable fuel level strictly below the
// threshold. Absent fuel never qualifies.
bool needs_fuel(const VehicleReading& r, double threshold_pct);

// First-appearance gate: one pass per trip, where a trip ends after gap_ms
// of silence. Every reading refreshes last_seen, passing or not.
class TripGate {
 public:
  explicit TripGate(long long gap_ms) : gap_ms_(gap_ms) {}

  // True iff the vehicle is unknown or idle strictly longer than the gap.
  bool admit(const std::string& vehicle_id, long long ts_ms);

  // Evicts vehicles idle strictly longer than the gap.
  void sweep(long long now_ms);

  std::size_t size() const { return last_seen_.size(); }

 private:
  long long gap_ms_;
  std::unordered_map<std::string, long long> last_seen_;
};

// The same gate as a keyed state function over [vehicle_id, reading] pairs.
// State: {"last_seen": ms, "pass": [readings admitted this batch]}. New
// values fold in timestamp order; pass holds only the current batch's
// admissions. Pair with ttl_ms = gap_ms so idle vehicles expire.
stream::StateFn trip_gate_state_fn(long long gap_ms);

// Unpacks update-state output: [vehicle_id, state] -> the admitted readings.
engine::FlatMapFn trip_passes_flat_map();

}  // namespace thetastream::cis
