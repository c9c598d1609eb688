#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thetastream/cis/types.hpp"

namespace thetastream::cis {

// All kinds a station sells, from one upstream fetch.
using PriceTable = std::map<FuelKind, double>;

// nullopt: the upstream knows no such station (or is unreachable).
using PriceFetchFn = std::function<std::optional<PriceTable>(const std::string& station_id)>;

// Front of the remote price service. One fetch fills the whole per-station
// table; entries older than the TTL are refetched, entries exactly at it are
// still served. Failed fetches cache nothing.
class PriceCache {
 public:
  PriceCache(PriceFetchFn fetch, long long ttl_ms);

  // Throws StationNotFound when the upstream has no answer for the station
  // or the station does not sell the kind.
  double current_price(const std::string& station_id, FuelKind kind, long long now_ms);

  long long fetches() const;

 private:
  struct Entry {
    PriceTable table;
    long long fetched_ms = 0;
  };

  PriceFetchFn fetch_;
  long long ttl_ms_;
  std::map<std::string, Entry> entries_;
  long long fetches_ = 0;
  mutable std::mutex mu_;
};

// Record of past price changes; each event's price holds until the next one.
class PriceHistory {
 public:
  void add(const PriceEvent& e);
  void add_all(const std::vector<PriceEvent>& events);

  // Time-weighted stats of the in-effect price over [now - lookback, now].
  // A price set before the window carries forward into it; when the series
  // starts inside the window, coverage starts at the first event. Throws
  // NoHistory when no event is in effect at or before now.
  PriceStats average(const std::string& station_id, FuelKind kind, long long now_ms,
                     long long lookback_ms) const;

 private:
  // (ts, price) sorted by ts; equal timestamps keep insertion order, last wins.
  std::map<std::pair<std::string, FuelKind>, std::vector<std::pair<long long, double>>> series_;
};

}  // namespace thetastream::cis
