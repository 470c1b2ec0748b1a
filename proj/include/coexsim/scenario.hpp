#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "random.hpp"
#include "units.hpp"

namespace coexsim {

struct RoadConfig {
  double length_m = 2000.0;
  int lanes_per_direction = 3;
  double lane_width_m = 4.0;
  double density_veh_per_km = 61.5;
  double speed_mps = 140.0 / 3.6;

  int lane_count() const { return 2 * lanes_per_direction; }
};

struct Vehicle {
  int id = 0;
  int lane_index = 0;
  double pos_m = 0.0;
  Direction direction = Direction::Forward;
  Tech tech = Tech::ItsG5;
};

/// Lanes [0, lanes_per_direction) run forward, the rest backward.
inline Direction lane_direction(const RoadConfig& cfg, int lane_index) {
  return lane_index < cfg.lanes_per_direction ? Direction::Forward
                                              : Direction::Backward;
}

inline int vehicle_count(const RoadConfig& cfg) {
  return static_cast<int>(
      std::llround(cfg.density_veh_per_km * cfg.length_m / 1000.0));
}

/// Number of ITS-G5 stations for a fleet of n; halves round away from zero.
inline int itsg5_count(int n, double itsg5_fraction) {
  return static_cast<int>(std::llround(itsg5_fraction * n));
}

inline double wrap_position(double pos_m, double length_m) {
  double p = std::fmod(pos_m, length_m);
  if (p < 0.0) p += length_m;
  // fmod of a tiny negative can round back up to length_m
  if (p >= length_m) p = 0.0;
  return p;
}

inline std::vector<Vehicle> spawn(const RoadConfig& cfg, double itsg5_fraction,
                                  RandomStream& rng) {
  const int n = vehicle_count(cfg);
  const int n_itsg5 = itsg5_count(n, itsg5_fraction);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());

  std::vector<Vehicle> vehicles(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vehicle& v = vehicles[static_cast<std::size_t>(i)];
    v.id = i;
    v.pos_m = rng.uniform(0.0, cfg.length_m);
    v.lane_index = static_cast<int>(rng.uniform_int(0, cfg.lane_count() - 1));
    v.direction = lane_direction(cfg, v.lane_index);
  }
  for (int k = 0; k < n; ++k) {
    vehicles[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]
        .tech = k < n_itsg5 ? Tech::ItsG5 : Tech::LteV2x;
  }
  return vehicles;
}

inline void advance(std::span<Vehicle> vehicles, const RoadConfig& cfg,
                    double dt_s) {
  const double step = cfg.speed_mps * dt_s;
  for (Vehicle& v : vehicles) {
    const double signed_step = v.direction == Direction::Forward ? step : -step;
    v.pos_m = wrap_position(v.pos_m + signed_step, cfg.length_m);
  }
}

/// Lateral coordinate of a lane center.
inline double lane_center_m(const RoadConfig& cfg, int lane_index) {
  return (lane_index + 0.5) * cfg.lane_width_m;
}

/// Euclidean distance on the unwrapped road.
inline double distance_m(const Vehicle& a, const Vehicle& b,
                         const RoadConfig& cfg) {
  const double dx = a.pos_m - b.pos_m;
  const double dy =
      lane_center_m(cfg, a.lane_index) - lane_center_m(cfg, b.lane_index);
  return std::hypot(dx, dy);
}

}  // namespace coexsim
