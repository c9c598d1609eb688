#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "thetastream/cis/types.hpp"

namespace thetastream::cis {

struct StationHit {
  GasStation station;
  double distance_km = 0.0;
};

// Read-only spatial index over the station corpus, bulk-loaded sort-tile-
// recursive. Built once on the driver and shared with workers; queries prune
// subtrees whose bounding box provably lies beyond the radius, so results
// always equal a linear scan.
class StationIndex {
 public:
  static constexpr int kLeafCapacity = 16;

  // Throws DuplicateStationId. An empty corpus builds an index that answers
  // every query with no hits.
  static StationIndex build(std::vector<GasStation> stations);

  // Stations within radius_km inclusive, ascending distance, ties by id.
  std::vector<StationHit> nearby(double lat, double lon, double radius_km) const;

  const GasStation* find(const std::string& station_id) const;
  std::size_t size() const { return stations_.size(); }

  // Tree nodes examined by the most recent nearby() call.
  long long last_query_visits() const { return last_visits_; }
  // Process-wide count of build() runs; a broadcast index must not rebuild
  // per worker.
  static long long builds_total();

 private:
  struct Node {
    double min_lat = 0, max_lat = 0, min_lon = 0, max_lon = 0;
    double center_lat = 0, center_lon = 0;
    double reach_km = 0;          // upper bound on center-to-any-box-point distance
    std::vector<int> children;    // node ids; empty for leaves
    std::vector<int> entries;     // station indices; leaves only
  };

  int pack_level(const std::vector<int>& nodes);
  Node make_parent(const std::vector<int>& child_ids) const;

  std::vector<GasStation> stations_;
  std::vector<Node> nodes_;
  int root_ = -1;
  std::unordered_map<std::string, int> by_id_;
  mutable long long last_visits_ = 0;
};

}  // namespace thetastream::cis
