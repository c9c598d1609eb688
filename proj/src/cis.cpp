#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <numeric>

#include "thetastream/cis/csv.hpp"
#include "thetastream/cis/geo.hpp"
#include "thetastream/cis/notify.hpp"
#include "thetastream/cis/parse.hpp"
#include "thetastream/cis/prices.hpp"
#include "thetastream/cis/recommend.hpp"
#include "thetastream/cis/station_index.hpp"
#include "thetastream/cis/trip.hpp"

namespace thetastream::cis {

namespace {

constexpr double kPi = 3.14159265358979323846;

double rad(double deg) { return deg * kPi / 180.0; }

std::optional<double> strict_double(const std::string& s) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return out;
}

}  // namespace

const char* to_string(FuelKind kind) {
  switch (kind) {
    case FuelKind::e5: return "e5";
    case FuelKind::e10: return "e10";
    case FuelKind::diesel: return "diesel";
  }
  return "e5";
}

std::optional<FuelKind> fuel_kind_from(const std::string& name) {
  if (name == "e5") return FuelKind::e5;
  if (name == "e10") return FuelKind::e10;
  if (name == "diesel") return FuelKind::diesel;
  return std::nullopt;
}

engine::Value to_value(const VehicleReading& r) {
  engine::Value v{{"vehicle_id", r.vehicle_id}, {"ts_ms", r.ts_ms},   {"lat", r.lat},
                  {"lon", r.lon},               {"alt_m", r.alt_m},   {"readings", r.readings}};
  if (r.fuel_pct) v["fuel_pct"] = *r.fuel_pct;
  return v;
}

VehicleReading reading_from_value(const engine::Value& v) {
  VehicleReading r;
  r.vehicle_id = v.at("vehicle_id").get<std::string>();
  r.ts_ms = v.at("ts_ms").get<long long>();
  r.lat = v.at("lat").get<double>();
  r.lon = v.at("lon").get<double>();
  r.alt_m = v.at("alt_m").get<double>();
  r.readings = v.at("readings").get<std::map<std::string, std::string>>();
  if (v.contains("fuel_pct")) r.fuel_pct = v.at("fuel_pct").get<double>();
  return r;
}

// --- geodesy -----------------------------------------------------------

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  double half_dlat = rad(lat2 - lat1) / 2.0;
  double half_dlon = rad(lon2 - lon1) / 2.0;
  double a = std::sin(half_dlat) * std::sin(half_dlat) +
             std::cos(rad(lat1)) * std::cos(rad(lat2)) * std::sin(half_dlon) * std::sin(half_dlon);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

// --- ingest ------------------------------------------------------------

std::optional<double> parse_fuel_level(const std::string& text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  if (e > b && text[e - 1] == '%') --e;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  auto value = strict_double(text.substr(b, e - b));
  if (!value || *value < 0.0 || *value > 100.0) return std::nullopt;
  return value;
}

ParsedReading parse_vehicle_reading(const std::string& raw) {
  engine::Value doc = engine::Value::parse(raw, nullptr, false);
  if (doc.is_discarded()) return DeadLetter{raw, "malformed json"};
  if (!doc.is_object()) return DeadLetter{raw, "not a json object"};
  for (const char* key : {"vehicleid", "timestamp", "latitude", "longitude", "altitude"})
    if (!doc.contains(key)) return DeadLetter{raw, std::string("missing field '") + key + "'"};
  if (!doc["vehicleid"].is_string() || doc["vehicleid"].get<std::string>().empty())
    return DeadLetter{raw, "vehicleid must be a non-empty string"};
  if (!doc["timestamp"].is_number()) return DeadLetter{raw, "timestamp must be epoch ms"};
  for (const char* key : {"latitude", "longitude", "altitude"})
    if (!doc[key].is_number()) return DeadLetter{raw, std::string("field '") + key + "' must be a number"};
  double lat = doc["latitude"].get<double>();
  double lon = doc["longitude"].get<double>();
  if (lat < -90.0 || lat > 90.0)
    return DeadLetter{raw, "latitude " + doc["latitude"].dump() + " outside [-90, 90]"};
  if (lon < -180.0 || lon > 180.0)
    return DeadLetter{raw, "longitude " + doc["longitude"].dump() + " outside [-180, 180]"};
  if (doc.contains("readings") && !doc["readings"].is_object())
    return DeadLetter{raw, "readings must be an object"};

  VehicleReading r;
  r.vehicle_id = doc["vehicleid"].get<std::string>();
  r.ts_ms = doc["timestamp"].get<long long>();
  r.lat = lat;
  r.lon = lon;
  r.alt_m = doc["altitude"].get<double>();
  if (doc.contains("readings"))
    for (const auto& [key, value] : doc["readings"].items())
      r.readings[key] = value.is_string() ? value.get<std::string>() : value.dump();
  if (auto it = r.readings.find("FUEL_LEVEL"); it != r.readings.end())
    r.fuel_pct = parse_fuel_level(it->second);
  return r;
}

// --- trip gating -------------------------------------------------------

bool needs_fuel(const VehicleReading& r, double threshold_pct) {
  return r.fuel_pct.has_value() && *r.fuel_pct < threshold_pct;
}

bool TripGate::admit(const std::string& vehicle_id, long long ts_ms) {
  auto it = last_seen_.find(vehicle_id);
  bool pass = it == last_seen_.end() || ts_ms - it->second > gap_ms_;
  last_seen_[vehicle_id] = ts_ms;
  return pass;
}

void TripGate::sweep(long long now_ms) {
  for (auto it = last_seen_.begin(); it != last_seen_.end();)
    it = now_ms - it->second > gap_ms_ ? last_seen_.erase(it) : std::next(it);
}

stream::StateFn trip_gate_state_fn(long long gap_ms) {
  return [gap_ms](const engine::Value&, const std::vector<engine::Value>& new_values,
                  const std::optional<engine::Value>& state) -> std::optional<engine::Value> {
    std::optional<long long> last_seen;
    if (state) last_seen = state->at("last_seen").get<long long>();
    auto ordered = new_values;
    std::stable_sort(ordered.begin(), ordered.end(), [](const engine::Value& a, const engine::Value& b) {
      return a.at("ts_ms").get<long long>() < b.at("ts_ms").get<long long>();
    });
    engine::Value next{{"pass", engine::Value::array()}};
    for (const auto& v : ordered) {
      long long ts = v.at("ts_ms").get<long long>();
      if (!last_seen || ts - *last_seen > gap_ms) next["pass"].push_back(v);
      last_seen = ts;
    }
    if (!last_seen) return std::nullopt;
    next["last_seen"] = *last_seen;
    return next;
  };
}

engine::FlatMapFn trip_passes_flat_map() {
  return [](const engine::Value& pair) {
    std::vector<engine::Value> out;
    for (const auto& v : pair.at(1).at("pass")) out.push_back(v);
    return out;
  };
}

// --- station index -----------------------------------------------------

namespace {

std::atomic<long long> g_index_builds{0};

// STR tiling: sort by x, cut into sqrt-many slabs, sort each slab by y, chunk
// into capacity-sized runs. Deterministic via the id tie-break.
template <typename XFn, typename YFn, typename IdFn>
std::vector<std::vector<int>> str_tiles(std::vector<int> items, XFn x, YFn y, IdFn id) {
  const int cap = StationIndex::kLeafCapacity;
  const int n = static_cast<int>(items.size());
  const int groups = (n + cap - 1) / cap;
  const int slabs = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(groups))));
  const int per_slab = (n + slabs - 1) / slabs;
  std::sort(items.begin(), items.end(), [&](int a, int b) {
    if (x(a) != x(b)) return x(a) < x(b);
    if (y(a) != y(b)) return y(a) < y(b);
    return id(a) < id(b);
  });
  std::vector<std::vector<int>> out;
  for (int s = 0; s * per_slab < n; ++s) {
    auto first = items.begin() + s * per_slab;
    auto last = items.begin() + std::min(n, (s + 1) * per_slab);
    std::sort(first, last, [&](int a, int b) {
      if (y(a) != y(b)) return y(a) < y(b);
      if (x(a) != x(b)) return x(a) < x(b);
      return id(a) < id(b);
    });
    for (auto it = first; it != last;) {
      auto stop = it + std::min<std::ptrdiff_t>(cap, last - it);
      out.emplace_back(it, stop);
      it = stop;
    }
  }
  return out;
}

}  // namespace

long long StationIndex::builds_total() { return g_index_builds.load(); }

StationIndex StationIndex::build(std::vector<GasStation> stations) {
  StationIndex idx;
  idx.stations_ = std::move(stations);
  for (std::size_t i = 0; i < idx.stations_.size(); ++i) {
    auto [it, fresh] = idx.by_id_.emplace(idx.stations_[i].station_id, static_cast<int>(i));
    if (!fresh) throw DuplicateStationId(idx.stations_[i].station_id);
  }
  if (!idx.stations_.empty()) {
    std::vector<int> all(idx.stations_.size());
    std::iota(all.begin(), all.end(), 0);
    auto tiles = str_tiles(
        std::move(all), [&](int i) { return idx.stations_[i].lon; },
        [&](int i) { return idx.stations_[i].lat; },
        [&](int i) -> const std::string& { return idx.stations_[i].station_id; });
    std::vector<int> level;
    for (auto& tile : tiles) {
      Node leaf;
      leaf.entries = std::move(tile);
      leaf.min_lat = leaf.min_lon = std::numeric_limits<double>::infinity();
      leaf.max_lat = leaf.max_lon = -std::numeric_limits<double>::infinity();
      for (int si : leaf.entries) {
        const GasStation& st = idx.stations_[si];
        leaf.min_lat = std::min(leaf.min_lat, st.lat);
        leaf.max_lat = std::max(leaf.max_lat, st.lat);
        leaf.min_lon = std::min(leaf.min_lon, st.lon);
        leaf.max_lon = std::max(leaf.max_lon, st.lon);
      }
      idx.nodes_.push_back(std::move(leaf));
      level.push_back(static_cast<int>(idx.nodes_.size()) - 1);
    }
    idx.root_ = idx.pack_level(level);
    for (auto& nd : idx.nodes_) {
      nd.center_lat = (nd.min_lat + nd.max_lat) / 2.0;
      nd.center_lon = (nd.min_lon + nd.max_lon) / 2.0;
      // Any box point is reachable from the center along a meridian then a
      // parallel; the parallel arc is at most R * dlon. Triangle inequality
      // then makes dist(q, center) - reach a valid lower bound for pruning.
      nd.reach_km = kEarthRadiusKm * (rad(nd.max_lat - nd.min_lat) / 2.0 + rad(nd.max_lon - nd.min_lon) / 2.0);
    }
  }
  ++g_index_builds;
  return idx;
}

int StationIndex::pack_level(const std::vector<int>& nodes) {
  if (nodes.size() == 1) return nodes.front();
  auto tiles = str_tiles(
      nodes, [&](int i) { return (nodes_[i].min_lon + nodes_[i].max_lon) / 2.0; },
      [&](int i) { return (nodes_[i].min_lat + nodes_[i].max_lat) / 2.0; }, [](int i) { return i; });
  std::vector<int> level;
  for (auto& tile : tiles) {
    Node parent;
    parent.min_lat = parent.min_lon = std::numeric_limits<double>::infinity();
    parent.max_lat = parent.max_lon = -std::numeric_limits<double>::infinity();
    for (int c : tile) {
      parent.min_lat = std::min(parent.min_lat, nodes_[c].min_lat);
      parent.max_lat = std::max(parent.max_lat, nodes_[c].max_lat);
      parent.min_lon = std::min(parent.min_lon, nodes_[c].min_lon);
      parent.max_lon = std::max(parent.max_lon, nodes_[c].max_lon);
    }
    parent.children = std::move(tile);
    nodes_.push_back(std::move(parent));
    level.push_back(static_cast<int>(nodes_.size()) - 1);
  }
  return pack_level(level);
}

std::vector<StationHit> StationIndex::nearby(double lat, double lon, double radius_km) const {
  last_visits_ = 0;
  std::vector<StationHit> hits;
  if (root_ < 0) return hits;
  std::vector<int> stack{root_};
  while (!stack.empty()) {
    const Node& nd = nodes_[stack.back()];
    stack.pop_back();
    ++last_visits_;
    if (haversine_km(lat, lon, nd.center_lat, nd.center_lon) - nd.reach_km > radius_km) continue;
    if (nd.children.empty()) {
      for (int si : nd.entries) {
        const GasStation& st = stations_[si];
        double d = haversine_km(lat, lon, st.lat, st.lon);
        if (d <= radius_km) hits.push_back({st, d});
      }
    } else {
      for (int c : nd.children) stack.push_back(c);
    }
  }
  std::sort(hits.begin(), hits.end(), [](const StationHit& a, const StationHit& b) {
    if (a.distance_km != b.distance_km) return a.distance_km < b.distance_km;
    return a.station.station_id < b.station.station_id;
  });
  return hits;
}

const GasStation* StationIndex::find(const std::string& station_id) const {
  auto it = by_id_.find(station_id);
  return it == by_id_.end() ? nullptr : &stations_[it->second];
}

// --- prices ------------------------------------------------------------

PriceCache::PriceCache(PriceFetchFn fetch, long long ttl_ms)
    : fetch_(std::move(fetch)), ttl_ms_(ttl_ms) {}

double PriceCache::current_price(const std::string& station_id, FuelKind kind, long long now_ms) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(station_id);
  if (it == entries_.end() || now_ms - it->second.fetched_ms > ttl_ms_) {
    ++fetches_;
    auto table = fetch_(station_id);
    if (!table) {
      entries_.erase(station_id);
      throw StationNotFound(station_id);
    }
    it = entries_.insert_or_assign(station_id, Entry{std::move(*table), now_ms}).first;
  }
  auto kt = it->second.table.find(kind);
  if (kt == it->second.table.end()) throw StationNotFound(station_id);
  return kt->second;
}

long long PriceCache::fetches() const {
  std::lock_guard<std::mutex> lock(mu_);
  return fetches_;
}

void PriceHistory::add(const PriceEvent& e) {
  auto& series = series_[{e.station_id, e.fuel}];
  auto it = std::upper_bound(series.begin(), series.end(), e.effective_from_ms,
                             [](long long t, const std::pair<long long, double>& p) { return t < p.first; });
  series.insert(it, {e.effective_from_ms, e.price});
}

void PriceHistory::add_all(const std::vector<PriceEvent>& events) {
  for (const auto& e : events) add(e);
}

PriceStats PriceHistory::average(const std::string& station_id, FuelKind kind, long long now_ms,
                                 long long lookback_ms) const {
  auto found = series_.find({station_id, kind});
  if (found == series_.end()) throw NoHistory(station_id);
  const auto& series = found->second;
  if (series.empty() || series.front().first > now_ms) throw NoHistory(station_id);

  long long t0 = std::max(now_ms - lookback_ms, series.front().first);
  std::size_t i = 0;
  double cur = series.front().second;
  while (i < series.size() && series[i].first <= t0) cur = series[i++].second;

  double weighted = 0.0;
  long long covered = 0;
  double mn = std::numeric_limits<double>::infinity();
  double mx = -std::numeric_limits<double>::infinity();
  auto segment = [&](double price, long long len) {
    if (len <= 0) return;
    weighted += price * static_cast<double>(len);
    covered += len;
    mn = std::min(mn, price);
    mx = std::max(mx, price);
  };
  long long cursor = t0;
  for (; i < series.size() && series[i].first <= now_ms; ++i) {
    segment(cur, series[i].first - cursor);
    cur = series[i].second;
    cursor = series[i].first;
  }
  segment(cur, now_ms - cursor);
  if (covered == 0) return {cur, cur, cur};  // only a zero-length window: the point price
  return {weighted / static_cast<double>(covered), mn, mx};
}

// --- recommendation ----------------------------------------------------

RecommendOutcome recommend_station(const VehicleReading& r, const StationIndex& index,
                                   PriceCache& prices, const PriceHistory& history,
                                   const RecommenderConfig& cfg) {
  const long long now = r.ts_ms;
  auto candidates = index.nearby(r.lat, r.lon, cfg.radius_km);
  if (candidates.empty()) return {std::nullopt, "no_station"};

  const double fuel = r.fuel_pct.value_or(0.0);  // the fuel filter runs upstream
  const double refill_l = cfg.tank_capacity_l * (1.0 - fuel / 100.0);

  const StationHit* best = nullptr;
  double best_total = 0.0;
  double best_price = 0.0;
  for (const auto& cand : candidates) {  // (distance, id) order: strict < keeps the tie-break
    double price;
    try {
      price = prices.current_price(cand.station.station_id, cfg.fuel_kind, now);
    } catch (const StationNotFound&) {
      continue;
    }
    double total = price * refill_l + cand.distance_km * cfg.consumption_l_per_km * price;
    if (!best || total < best_total) {
      best = &cand;
      best_total = total;
      best_price = price;
    }
  }
  if (!best) return {std::nullopt, "no_price"};

  bool good_price;
  try {
    PriceStats hist = history.average(best->station.station_id, cfg.fuel_kind, now,
                                      static_cast<long long>(cfg.lookback_days) * 86400000LL);
    good_price = best_price <= hist.mean;
  } catch (const NoHistory&) {
    good_price = true;  // no record saying the price is bad
  }

  Recommendation rec{r.vehicle_id, best->station.station_id, best->distance_km,
                     best_price,   best_total,               ""};
  if (good_price) {
    rec.reason = "good_price";
    return {rec, "good_price"};
  }
  if (fuel <= cfg.critical_fuel_pct) {
    rec.reason = "low_fuel";
    return {rec, "low_fuel"};
  }
  return {std::nullopt, "wait_for_drop"};
}

// --- CSV + timestamps --------------------------------------------------

namespace {

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string> split_csv_line(const std::string& line, int line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw CisError("line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(std::move(field));
  return out;
}

double double_field(const std::string& s, const char* what, int line_no) {
  auto v = strict_double(s);
  if (!v) throw CisError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  return *v;
}

void expect_header(std::istream& in, const char* want, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw CisError(std::string("empty ") + what + " input");
  strip_cr(line);
  if (line != want)
    throw CisError(std::string("bad ") + what + " header '" + line + "', want '" + want + "'");
}

}  // namespace

std::vector<GasStation> parse_station_csv(std::istream& in) {
  expect_header(in, "station_id,name,latitude,longitude", "station");
  std::vector<GasStation> out;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split_csv_line(line, line_no);
    if (f.size() != 4)
      throw CisError("line " + std::to_string(line_no) + ": want 4 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) throw CisError("line " + std::to_string(line_no) + ": empty station_id");
    GasStation st{f[0], f[1], double_field(f[2], "latitude", line_no), double_field(f[3], "longitude", line_no)};
    if (st.lat < -90.0 || st.lat > 90.0 || st.lon < -180.0 || st.lon > 180.0)
      throw CisError("line " + std::to_string(line_no) + ": coordinate out of range");
    out.push_back(std::move(st));
  }
  return out;
}

std::vector<GasStation> load_station_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CisError("cannot open '" + path + "'");
  return parse_station_csv(in);
}

std::vector<PriceEvent> parse_price_csv(std::istream& in) {
  expect_header(in, "station_id,fuel,price,effective_from", "price");
  std::vector<PriceEvent> out;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split_csv_line(line, line_no);
    if (f.size() != 4)
      throw CisError("line " + std::to_string(line_no) + ": want 4 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) throw CisError("line " + std::to_string(line_no) + ": empty station_id");
    auto kind = fuel_kind_from(f[1]);
    if (!kind) throw CisError("line " + std::to_string(line_no) + ": unknown fuel '" + f[1] + "'");
    double price = double_field(f[2], "price", line_no);
    if (price <= 0.0) throw CisError("line " + std::to_string(line_no) + ": price must be positive");
    long long ts;
    try {
      ts = parse_iso8601_utc_ms(f[3]);
    } catch (const CisError& e) {
      throw CisError("line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back({f[0], *kind, price, ts});
  }
  return out;
}

std::vector<PriceEvent> load_price_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CisError("cannot open '" + path + "'");
  return parse_price_csv(in);
}

long long parse_iso8601_utc_ms(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0, n = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s, &n) != 6 ||
      n != 19)
    throw CisError("bad ISO-8601 timestamp '" + text + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60)
    throw CisError("bad ISO-8601 timestamp '" + text + "'");
  std::size_t pos = 19;

  long long frac_ms = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int kept = 0, total = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      if (kept < 3) {
        frac_ms = frac_ms * 10 + (text[pos] - '0');
        ++kept;
      }
      ++total;
      ++pos;
    }
    if (total == 0) throw CisError("bad ISO-8601 timestamp '" + text + "'");
    for (; kept < 3; ++kept) frac_ms *= 10;
  }

  long long offset_ms = 0;
  if (pos < text.size()) {
    char z = text[pos];
    std::string rest = text.substr(pos + 1);
    if (z == 'Z') {
      if (!rest.empty()) throw CisError("bad ISO-8601 timestamp '" + text + "'");
    } else if (z == '+' || z == '-') {
      std::string digits = rest;
      if (digits.size() == 5 && digits[2] == ':') digits.erase(2, 1);
      if (digits.size() != 4 ||
          !std::all_of(digits.begin(), digits.end(),
                       [](unsigned char c) { return std::isdigit(c); }))
        throw CisError("bad ISO-8601 timestamp '" + text + "'");
      int oh = (digits[0] - '0') * 10 + (digits[1] - '0');
      int om = (digits[2] - '0') * 10 + (digits[3] - '0');
      if (oh > 14 || om > 59) throw CisError("bad ISO-8601 timestamp '" + text + "'");
      offset_ms = (oh * 3600LL + om * 60LL) * 1000LL * (z == '-' ? -1 : 1);
    } else {
      throw CisError("bad ISO-8601 timestamp '" + text + "'");
    }
  }

  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = s;
  long long secs = timegm(&tm);
  return secs * 1000LL + frac_ms - offset_ms;
}

std::string format_iso8601_utc_ms(long long ms) {
  long long secs = ms / 1000;
  long long frac = ms % 1000;
  if (frac < 0) {
    frac += 1000;
    --secs;
  }
  std::time_t t = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  if (frac != 0)
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03lldZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
  else
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

// --- notifications -----------------------------------------------------

engine::Value to_value(const Notification& n) {
  return {{"vehicleid", n.vehicle_id},
          {"station_id", n.station_id},
          {"price", n.price_per_liter},
          {"expected_cost", n.expected_fill_cost}};
}

Notification notification_from_value(const engine::Value& v) {
  return {v.at("vehicleid").get<std::string>(), v.at("station_id").get<std::string>(),
          v.at("price").get<double>(), v.at("expected_cost").get<double>()};
}

void publish_notifications(theta::Broker& broker, const std::string& topic, long long batch_id,
                           const std::vector<Recommendation>& recs, long long now_ms) {
  for (const auto& rec : recs) {
    engine::Value msg =
        to_value(Notification{rec.vehicle_id, rec.station_id, rec.price_per_liter, rec.expected_fill_cost});
    msg["writer_batch_id"] = std::to_string(batch_id);
    broker.publish(topic, std::to_string(batch_id) + "/" + rec.vehicle_id, msg.dump(), now_ms);
  }
}

NotificationSink::NotificationSink(theta::Broker* broker, std::string group, std::string topic,
                                   DeliverFn deliver)
    : broker_(broker), group_(std::move(group)), topic_(std::move(topic)), deliver_(std::move(deliver)) {
  broker_->subscribe(group_, topic_);
}

int NotificationSink::drain(long long now_ms) {
  broker_->redeliver_expired(group_, topic_, now_ms);
  int settled = 0;
  while (auto env = broker_->consume(group_, topic_, now_ms)) {
    engine::Value doc = engine::Value::parse(env->payload);
    std::pair<std::string, std::string> key{doc.at("writer_batch_id").get<std::string>(),
                                            doc.at("vehicleid").get<std::string>()};
    if (seen_.count(key)) {
      broker_->ack(group_, env->delivery_id);
      ++suppressed_;
      ++settled;
      continue;
    }
    bool ok = false;
    try {
      ok = deliver_(notification_from_value(doc));
    } catch (...) {
      ok = false;
    }
    if (!ok) continue;  // unacked: back after the visibility timeout
    broker_->ack(group_, env->delivery_id);
    seen_.insert(key);
    ++delivered_;
    ++settled;
  }
  return settled;
}

}  // namespace thetastream::cis
