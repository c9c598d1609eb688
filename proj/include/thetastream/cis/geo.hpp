#pragma once

namespace thetastream::cis {

inline constexpr double kEarthRadiusKm = 6371.0;

// Great-circle distance between two WGS84 coordinates, in kilometers.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

}  // namespace thetastream::cis
