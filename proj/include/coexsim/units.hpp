#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace coexsim {

/// Simulation time in integer microseconds.
using TimeUs = std::int64_t;

constexpr TimeUs kUsPerMs = 1000;
constexpr TimeUs kUsPerS = 1000000;

enum class Tech : std::uint8_t { ItsG5, LteV2x };

enum class Direction : std::uint8_t { Forward, Backward };

enum class TrafficMode : std::uint8_t { Standard, Constrained };

constexpr std::string_view to_string(Tech t) {
  return t == Tech::ItsG5 ? "ItsG5" : "LteV2x";
}

constexpr std::string_view to_string(TrafficMode m) {
  return m == TrafficMode::Standard ? "standard" : "constrained";
}

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double ratio) { return 10.0 * std::log10(ratio); }

}  // namespace coexsim
