#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "random.hpp"
#include "scenario.hpp"
#include "units.hpp"

namespace coexsim {

struct LinkBudgetConfig {
  double tx_power_dbm = 23.0;
  double tx_gain_db = 3.0;
  double rx_gain_db = 3.0;
  double noise_figure_db = 6.0;
  double bandwidth_hz = 1.0e7;
  double carrier_ghz = 5.9;
  /// Antenna height above the effective environment height (1.5 m - 1.0 m).
  double effective_antenna_height_m = 0.5;
  double min_distance_m = 3.0;
  double shadowing_sigma_db = 3.0;
  double shadowing_decorr_m = 25.0;
};

constexpr double kSpeedOfLight = 3.0e8;

inline double breakpoint_distance_m(const LinkBudgetConfig& cfg) {
  const double h = cfg.effective_antenna_height_m;
  return 4.0 * h * h * cfg.carrier_ghz * 1.0e9 / kSpeedOfLight;
}

/// WINNER+ B1 line-of-sight path loss, two-slope around the breakpoint.
inline double path_loss_db(double d_m, const LinkBudgetConfig& cfg) {
  const double d = std::max(d_m, cfg.min_distance_m);
  const double f_rel = cfg.carrier_ghz / 5.0;
  if (d <= breakpoint_distance_m(cfg)) {
    return 22.7 * std::log10(d) + 41.0 + 20.0 * std::log10(f_rel);
  }
  const double h = cfg.effective_antenna_height_m;
  return 40.0 * std::log10(d) + 9.45 - 17.3 * std::log10(h) -
         17.3 * std::log10(h) + 2.7 * std::log10(f_rel);
}

inline double noise_floor_dbm(const LinkBudgetConfig& cfg) {
  return -174.0 + 10.0 * std::log10(cfg.bandwidth_hz) + cfg.noise_figure_db;
}

/// One autoregressive update of a correlated log-normal shadowing value.
inline double shadowing_step(double current_db, double moved_m,
                             double sigma_db, double decorr_m,
                             RandomStream& rng) {
  const double rho = std::exp(-moved_m / decorr_m);
  if (rho == 1.0) return current_db;
  return rho * current_db +
         std::sqrt(1.0 - rho * rho) * rng.normal(0.0, sigma_db);
}

/// Shadowing per unordered vehicle pair, stored as a packed upper triangle.
class ShadowingField {
 public:
  ShadowingField() = default;

  ShadowingField(int n, double sigma_db, double decorr_m, RandomStream& rng)
      : n_(n), sigma_db_(sigma_db), decorr_m_(decorr_m) {
    values_.resize(pair_count());
    for (double& s : values_) s = rng.normal(0.0, sigma_db_);
  }

  int size() const { return n_; }

  double value(int a, int b) const {
    if (a == b) return 0.0;
    return values_[index(a, b)];
  }

  void set(int a, int b, double db) { values_[index(a, b)] = db; }

  /// Advance every pair; moved_m(a, b) is the pair's displacement since the
  /// previous update.
  template <typename Displacement>
  void step(Displacement&& moved_m, RandomStream& rng) {
    for (int a = 0; a < n_; ++a) {
      for (int b = a + 1; b < n_; ++b) {
        double& s = values_[index(a, b)];
        s = shadowing_step(s, moved_m(a, b), sigma_db_, decorr_m_, rng);
      }
    }
  }

 private:
  std::size_t pair_count() const {
    return static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_ - 1) / 2;
  }

  std::size_t index(int a, int b) const {
    if (a > b) std::swap(a, b);
    const auto i = static_cast<std::size_t>(a);
    const auto j = static_cast<std::size_t>(b);
    const auto n = static_cast<std::size_t>(n_);
    return i * (2 * n - i - 1) / 2 + (j - i - 1);
  }

  int n_ = 0;
  double sigma_db_ = 3.0;
  double decorr_m_ = 25.0;
  std::vector<double> values_;
};

inline double rx_power_dbm(double distance, double shadowing_db,
                           const LinkBudgetConfig& cfg) {
  return cfg.tx_power_dbm + cfg.tx_gain_db + cfg.rx_gain_db -
         path_loss_db(distance, cfg) - shadowing_db;
}

inline double rx_power_dbm(const Vehicle& tx, const Vehicle& rx,
                           const RoadConfig& road, const LinkBudgetConfig& cfg,
                           const ShadowingField& shadow) {
  return rx_power_dbm(distance_m(tx, rx, road), shadow.value(tx.id, rx.id),
                      cfg);
}

struct Interferer {
  double power_dbm = 0.0;
  /// Overlap with the desired packet divided by the desired airtime.
  double overlap_fraction = 0.0;
};

/// SINR with interference averaged over the desired packet's airtime, all in
/// linear milliwatts.
inline double average_sinr_linear(double desired_mw, double interference_mw,
                                  double noise_mw) {
  return desired_mw / (noise_mw + interference_mw);
}

inline double average_sinr_db(double desired_dbm,
                              std::span<const Interferer> interferers,
                              double noise_dbm) {
  double interference_mw = 0.0;
  for (const Interferer& i : interferers) {
    interference_mw += dbm_to_mw(i.power_dbm) * i.overlap_fraction;
  }
  return linear_to_db(average_sinr_linear(dbm_to_mw(desired_dbm),
                                          interference_mw,
                                          dbm_to_mw(noise_dbm)));
}

/// Monotone PER-vs-SINR table, linearly interpolated in (dB, PER).
class PerCurve {
 public:
  struct Point {
    double sinr_db;
    double per;
  };

  PerCurve() = default;

  explicit PerCurve(std::vector<Point> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("PER curve is empty");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const Point& p = points_[i];
      if (!(p.per >= 0.0 && p.per <= 1.0)) {
        throw std::invalid_argument("PER value outside [0, 1] at point " +
                                    std::to_string(i));
      }
      if (i > 0) {
        if (!(p.sinr_db > points_[i - 1].sinr_db)) {
          throw std::invalid_argument(
              "PER curve SINR values must be strictly increasing at point " +
              std::to_string(i));
        }
        if (p.per > points_[i - 1].per) {
          throw std::invalid_argument(
              "PER curve must be non-increasing at point " +
              std::to_string(i));
        }
      }
    }
  }

  /// Three-point curve through (anchor, 0.1).
  static PerCurve anchored(double anchor_db) {
    return PerCurve(
        {{anchor_db - 2.0, 0.9}, {anchor_db, 0.1}, {anchor_db + 1.0, 0.01}});
  }

  /// ITS-G5 MCS 2 (QPSK 1/2), 350 B.
  static PerCurve itsg5_default() { return anchored(3.1); }

  /// LTE-V2X MCS 4 (QPSK 0.33), 350 B.
  static PerCurve ltev2x_default() { return anchored(0.1); }

  const std::vector<Point>& points() const { return points_; }

  double lookup(double sinr_db) const {
    if (sinr_db < points_.front().sinr_db) return 1.0;
    if (sinr_db > points_.back().sinr_db) return 0.0;
    auto hi = std::lower_bound(
        points_.begin(), points_.end(), sinr_db,
        [](const Point& p, double x) { return p.sinr_db < x; });
    if (hi->sinr_db == sinr_db) return hi->per;
    auto lo = std::prev(hi);
    const double t = (sinr_db - lo->sinr_db) / (hi->sinr_db - lo->sinr_db);
    return lo->per + t * (hi->per - lo->per);
  }

 private:
  std::vector<Point> points_;
};

/// Parses `sinr_db,per` CSV text (header required).
inline PerCurve parse_per_curve_csv(std::istream& in,
                                    const std::string& origin = "<stream>") {
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": " +
                             what);
  };
  std::vector<PerCurve::Point> points;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "sinr_db,per") fail("expected header 'sinr_db,per'");
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail("expected two columns");
    try {
      std::size_t used_a = 0;
      std::size_t used_b = 0;
      const std::string a = line.substr(0, comma);
      const std::string b = line.substr(comma + 1);
      const double sinr = std::stod(a, &used_a);
      const double per = std::stod(b, &used_b);
      if (used_a != a.size() || used_b != b.size()) fail("trailing characters");
      points.push_back({sinr, per});
    } catch (const std::logic_error&) {
      fail("malformed number");
    }
  }
  if (!header_seen) fail("missing header");
  try {
    return PerCurve(std::move(points));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(origin + ": " + e.what());
  }
}

inline PerCurve load_per_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open PER curve file: " + path);
  return parse_per_curve_csv(in, path);
}

inline bool decide_reception(double per, RandomStream& rng) {
  return rng.bernoulli(1.0 - per);
}

}  // namespace coexsim
