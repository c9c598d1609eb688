#pragma once

#include "thetastream/cis/prices.hpp"
#include "thetastream/cis/station_index.hpp"
#include "thetastream/cis/types.hpp"

namespace thetastream::cis {

// Picks the cheapest total-cost station within reach and decides whether to
// speak up. Total cost of station i at price p_i and detour d_i km:
//   p_i * refill_liters + d_i * consumption * p_i
// with refill_liters = tank * (1 - fuel_pct / 100). Ties break by smaller
// distance, then id. The winner is recommended when its price is at or below
// its own lookback mean (good_price), or regardless of price when fuel is at
// or below the critical level (low_fuel); otherwise the outcome is empty
// with reason wait_for_drop. No candidates: no_station. Candidates but no
// price answers: no_price. A winner without history counts as good_price.
// The reading's timestamp is "now" for prices and history.
RecommendOutcome recommend_station(const VehicleReading& r, const StationIndex& index,
                                   PriceCache& prices, const PriceHistory& history,
                                   const RecommenderConfig& cfg);

}  // namespace thetastream::cis
