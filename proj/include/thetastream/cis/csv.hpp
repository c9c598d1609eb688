#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "thetastream/cis/types.hpp"

namespace thetastream::cis {

// Header: station_id,name,latitude,longitude. Fields may be double-quoted
// (embedded commas, doubled quotes). Throws CisError naming the bad line.
std::vector<GasStation> parse_station_csv(std::istream& in);
std::vector<GasStation> load_station_csv(const std::string& path);

// Header: station_id,fuel,price,effective_from with effective_from as
// ISO-8601 UTC. fuel is one of e5, e10, diesel.
std::vector<PriceEvent> parse_price_csv(std::istream& in);
std::vector<PriceEvent> load_price_csv(const std::string& path);

// "YYYY-MM-DDTHH:MM:SS[.fff][Z|±HH:MM]" -> epoch ms. No zone suffix means
// UTC. Throws CisError on anything else.
long long parse_iso8601_utc_ms(const std::string& text);
std::string format_iso8601_utc_ms(long long ms);

}  // namespace thetastream::cis
