#pragma once

#include <optional>
#include <string>
#include <variant>

#include "thetastream/cis/types.hpp"

namespace thetastream::cis {

using ParsedReading = std::variant<VehicleReading, DeadLetter>;

// Decodes one vehicle JSON document. Required keys: vehicleid, timestamp,
// latitude, longitude, altitude; readings may be absent or partial. Anything
// malformed or out of coordinate range comes back as a DeadLetter carrying
// the reason; this never throws.
ParsedReading parse_vehicle_reading(const std::string& raw);

// FUEL_LEVEL wire format: decimal string, dot separator, optional trailing
// "%". Anything else, or a value outside [0, 100], is absent.
std::optional<double> parse_fuel_level(const std::string& text);

}  // namespace thetastream::cis
