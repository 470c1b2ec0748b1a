#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "random.hpp"
#include "units.hpp"

namespace coexsim {

/// Network-synchronized 1 ms grid; the last of 14 symbols is a guard.
struct TtiGrid {
  static constexpr TimeUs tti_us = 1000;
  static constexpr TimeUs occupied_us = 929;
  static constexpr TimeUs guard_us = 71;

  static constexpr TimeUs start_of(std::int64_t tti) { return tti * tti_us; }

  /// First TTI that starts at or after t.
  static constexpr std::int64_t first_at_or_after(TimeUs t) {
    return (t + tti_us - 1) / tti_us;
  }
};

static_assert(TtiGrid::occupied_us + TtiGrid::guard_us == TtiGrid::tti_us);

struct SpsConfig {
  double keep_probability = 0.5;
  double sensing_threshold_dbm = -110.0;
  int reselection_min = 5;
  int reselection_max = 15;
  int period_ttis = 100;
  int sensing_window_ttis = 1000;
  double best_fraction = 0.2;
  /// Documentation only: every transmission spans all subchannels.
  int subchannel_size_rb = 10;
};

/// A signal present at a receiver over [start_us, end_us).
struct PowerInterval {
  TimeUs start_us = 0;
  TimeUs end_us = 0;
  double power_mw = 0.0;
};

/// Time-averaged total power over [from, to): noise plus every interval
/// weighted by its overlap with the window.
inline double window_average_mw(TimeUs from, TimeUs to,
                                std::span<const PowerInterval> signals,
                                double noise_mw) {
  double energy = 0.0;
  for (const PowerInterval& s : signals) {
    const TimeUs lo = std::max(from, s.start_us);
    const TimeUs hi = std::min(to, s.end_us);
    if (hi > lo) energy += s.power_mw * static_cast<double>(hi - lo);
  }
  return noise_mw + energy / static_cast<double>(to - from);
}

/// RSSI of one TTI, averaged over its occupied window.
inline double measure_tti_rssi_dbm(std::int64_t tti,
                                   std::span<const PowerInterval> signals,
                                   double noise_mw) {
  const TimeUs start = TtiGrid::start_of(tti);
  return mw_to_dbm(window_average_mw(start, start + TtiGrid::occupied_us,
                                     signals, noise_mw));
}

struct SelectionResult {
  int offset = 0;
  std::int64_t tti = 0;
  /// Candidate TTIs that entered the final uniform pick.
  std::vector<std::int64_t> survivors;
  /// Every eligible candidate with its score, best first.
  std::vector<std::pair<std::int64_t, double>> ranked;
  bool fallback = false;
};

/// Sensing state and semi-persistent reservation of one LTE-V2X station.
class SpsState {
 public:
  static constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::min() / 2;

  SpsState(SpsConfig cfg, int node_count, double noise_mw)
      : cfg_(cfg),
        noise_mw_(noise_mw),
        history_(static_cast<std::size_t>(cfg.sensing_window_ttis)),
        reservations_(static_cast<std::size_t>(node_count)) {}

  const SpsConfig& config() const { return cfg_; }
  bool has_resource() const { return has_resource_; }
  int selected_offset() const { return offset_; }
  int reselection_counter() const { return counter_; }
  std::int64_t reselections() const { return reselections_; }
  std::int64_t counter_expiries() const { return expiries_; }

  void set_resource(int offset, int counter) {
    offset_ = offset;
    counter_ = counter;
    has_resource_ = true;
  }

  void record_rssi(std::int64_t tti, double rssi_mw) {
    Entry& e = slot(tti);
    e = {tti, rssi_mw, false};
  }

  void record_blind(std::int64_t tti) {
    Entry& e = slot(tti);
    e = {tti, 0.0, true};
  }

  /// Control information heard from `source` in `tti`.
  void decode_reservation(int source, std::int64_t tti, double rx_power_dbm) {
    if (rx_power_dbm < cfg_.sensing_threshold_dbm) return;
    Reservation& r = reservations_[static_cast<std::size_t>(source)];
    r.offset = static_cast<int>(tti % cfg_.period_ttis);
    r.heard_tti = tti;
  }

  bool reservation_active(int source, std::int64_t now_tti) const {
    const Reservation& r = reservations_[static_cast<std::size_t>(source)];
    return r.heard_tti != kNever &&
           now_tti - r.heard_tti < cfg_.sensing_window_ttis;
  }

  /// Offsets covered by at least one live reservation.
  std::vector<bool> reserved_offsets(std::int64_t now_tti) const {
    std::vector<bool> out(static_cast<std::size_t>(cfg_.period_ttis), false);
    for (std::size_t s = 0; s < reservations_.size(); ++s) {
      if (reservation_active(static_cast<int>(s), now_tti)) {
        out[static_cast<std::size_t>(reservations_[s].offset)] = true;
      }
    }
    return out;
  }

  /// Sensed history of candidate TTI at lag `periods` periods back, if valid.
  /// Returns NaN when unmeasured and -1 when blind.
  double history_at(std::int64_t candidate_tti, int periods) const {
    const std::int64_t tti = candidate_tti - std::int64_t{periods} * cfg_.period_ttis;
    if (tti < 0) return std::numeric_limits<double>::quiet_NaN();
    const Entry& e = slot(tti);
    if (e.tti != tti) return std::numeric_limits<double>::quiet_NaN();
    return e.blind ? -1.0 : e.rssi_mw;
  }

  bool candidate_blind(std::int64_t candidate_tti) const {
    for (int j = 1; j <= lag_count(); ++j) {
      if (history_at(candidate_tti, j) == -1.0) return true;
    }
    return false;
  }

  /// Linear mean of the same-phase history; noise when nothing was measured.
  double candidate_score_mw(std::int64_t candidate_tti) const {
    double sum = 0.0;
    int n = 0;
    for (int j = 1; j <= lag_count(); ++j) {
      const double v = history_at(candidate_tti, j);
      if (std::isnan(v) || v < 0.0) continue;
      sum += v;
      ++n;
    }
    return n == 0 ? noise_mw_ : sum / n;
  }

  int best_count() const {
    return static_cast<int>(
        std::ceil(cfg_.best_fraction * cfg_.period_ttis - 1e-9));
  }

  /// Picks a TTI among [first_tti, first_tti + period): exclusion by decoded
  /// reservations and blind history, ranking by same-phase RSSI, then a
  /// uniform draw from the best fraction.
  SelectionResult select_resource(std::int64_t first_tti,
                                  RandomStream& rng) const {
    std::vector<std::int64_t> candidates;
    std::vector<std::int64_t> non_blind;
    candidates.reserve(static_cast<std::size_t>(cfg_.period_ttis));
    const std::vector<bool> reserved = reserved_offsets(first_tti);
    for (int i = 0; i < cfg_.period_ttis; ++i) {
      const std::int64_t tti = first_tti + i;
      if (candidate_blind(tti)) continue;
      non_blind.push_back(tti);
      if (!reserved[static_cast<std::size_t>(tti % cfg_.period_ttis)]) {
        candidates.push_back(tti);
      }
    }
    SelectionResult result;
    if (candidates.empty()) {
      result.fallback = true;
      candidates = non_blind;
    }
    if (candidates.empty()) {
      for (int i = 0; i < cfg_.period_ttis; ++i) candidates.push_back(first_tti + i);
    }

    std::shuffle(candidates.begin(), candidates.end(), rng.engine());
    std::vector<std::pair<double, std::int64_t>> scored;
    scored.reserve(candidates.size());
    for (std::int64_t tti : candidates) {
      scored.emplace_back(candidate_score_mw(tti), tti);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t keep =
        std::min(scored.size(), static_cast<std::size_t>(best_count()));
    result.survivors.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) result.survivors.push_back(scored[i].second);
    result.ranked.reserve(scored.size());
    for (const auto& [score, tti] : scored) result.ranked.emplace_back(tti, score);

    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(keep) - 1));
    result.tti = result.survivors[pick];
    result.offset = static_cast<int>(result.tti % cfg_.period_ttis);
    return result;
  }

  int draw_counter(RandomStream& rng) const {
    return static_cast<int>(rng.uniform_int(cfg_.reselection_min, cfg_.reselection_max));
  }

  /// Called at each CAM generation. Returns the selection when a new
  /// resource was chosen, otherwise nothing.
  std::optional<SelectionResult> on_period_boundary(std::int64_t first_tti,
                                                    RandomStream& rng) {
    if (has_resource_) {
      if (--counter_ > 0) return std::nullopt;
      ++expiries_;
      if (rng.uniform() < cfg_.keep_probability) {
        counter_ = draw_counter(rng);
        return std::nullopt;
      }
    }
    SelectionResult sel = select_resource(first_tti, rng);
    offset_ = sel.offset;
    counter_ = draw_counter(rng);
    has_resource_ = true;
    ++reselections_;
    return sel;
  }

  /// The TTI carrying a packet whose first usable TTI is `first_tti`.
  std::int64_t next_tx_tti(std::int64_t first_tti) const {
    const std::int64_t p = cfg_.period_ttis;
    const std::int64_t delay = ((offset_ - first_tti) % p + p) % p;
    return first_tti + delay;
  }

 private:
  struct Entry {
    std::int64_t tti = -1;
    double rssi_mw = 0.0;
    bool blind = false;
  };

  struct Reservation {
    int offset = -1;
    std::int64_t heard_tti = kNever;
  };

  int lag_count() const { return cfg_.sensing_window_ttis / cfg_.period_ttis; }

  Entry& slot(std::int64_t tti) {
    return history_[static_cast<std::size_t>(tti % cfg_.sensing_window_ttis)];
  }
  const Entry& slot(std::int64_t tti) const {
    return history_[static_cast<std::size_t>(tti % cfg_.sensing_window_ttis)];
  }

  SpsConfig cfg_;
  double noise_mw_;
  bool has_resource_ = false;
  int offset_ = 0;
  int counter_ = 0;
  std::int64_t reselections_ = 0;
  std::int64_t expiries_ = 0;
  std::vector<Entry> history_;
  std::vector<Reservation> reservations_;
};

}  // namespace coexsim
