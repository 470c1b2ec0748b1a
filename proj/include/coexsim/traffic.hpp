#pragma once

#include <cmath>

#include "random.hpp"
#include "units.hpp"

namespace coexsim {

struct TrafficConfig {
  TrafficMode mode = TrafficMode::Standard;
  int payload_bytes = 350;
  double base_period_ms = 100.0;
  double itsg5_jitter_ms = 5.0;
  /// Redraw the ITS-G5 period for every packet instead of once per station.
  bool per_packet_jitter = false;
};

inline TimeUs ms_to_us(double ms) {
  return static_cast<TimeUs>(std::llround(ms * static_cast<double>(kUsPerMs)));
}

/// Phase of the first CAM, uniform over one base period.
inline TimeUs first_generation_time(const TrafficConfig& cfg,
                                    RandomStream& rng) {
  return rng.uniform_int(0, ms_to_us(cfg.base_period_ms) - 1);
}

/// Generation period in microseconds for a station of the given technology.
inline TimeUs station_period_us(Tech tech, const TrafficConfig& cfg,
                                RandomStream& rng) {
  const TimeUs base = ms_to_us(cfg.base_period_ms);
  if (cfg.mode == TrafficMode::Constrained || tech == Tech::LteV2x) return base;
  const TimeUs jitter = ms_to_us(cfg.itsg5_jitter_ms);
  return rng.uniform_int(base - jitter, base + jitter);
}

/// CAM source for one station: fixed phase and, unless per-packet jitter is
/// on, a fixed period.
class CamGenerator {
 public:
  CamGenerator(int source, Tech tech, const TrafficConfig& cfg,
               RandomStream& rng)
      : source_(source), tech_(tech), cfg_(cfg) {
    next_us_ = first_generation_time(cfg_, rng);
    period_us_ = station_period_us(tech_, cfg_, rng);
  }

  int source() const { return source_; }
  TimeUs next_generation_us() const { return next_us_; }
  TimeUs period_us() const { return period_us_; }

  /// Emits the CAM due at next_generation_us() and schedules the next one.
  struct Cam {
    int source;
    TimeUs generated_us;
    int payload_bytes;
  };

  Cam generate(RandomStream& rng) {
    Cam cam{source_, next_us_, cfg_.payload_bytes};
    if (cfg_.per_packet_jitter) period_us_ = station_period_us(tech_, cfg_, rng);
    next_us_ += period_us_;
    return cam;
  }

 private:
  int source_;
  Tech tech_;
  TrafficConfig cfg_;
  TimeUs next_us_ = 0;
  TimeUs period_us_ = 0;
};

}  // namespace coexsim
