#pragma once

#include <string>

#include "flamekit/error.hpp"

namespace flamekit {

/// Resampling unit for splits and bagging: whole flamelets or single points.
enum class Strategy { Flamelets, Points };

inline std::string to_string(Strategy s) {
    return s == Strategy::Flamelets ? "flamelets" : "points";
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "flamelets") return Strategy::Flamelets;
    if (s == "points") return Strategy::Points;
    throw DataError("unknown strategy '" + s + "' (expected 'flamelets' or 'points')");
}

}  // namespace flamekit
