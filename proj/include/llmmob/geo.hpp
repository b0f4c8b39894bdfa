#pragma once

#include <cmath>

namespace llmmob {

inline constexpr double kEarthRadiusM = 6371000.0;

// Great-circle distance in meters (haversine).
inline double haversine_m(double lat1, double lon1, double lat2, double lon2) {
    constexpr double deg = M_PI / 180.0;
    const double dlat = (lat2 - lat1) * deg;
    const double dlon = (lon2 - lon1) * deg;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

}  // namespace llmmob
