#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "engine.hpp"

namespace coexsim {

struct ExperimentConfig {
  EngineConfig engine;
  std::vector<double> mix_fractions{1.0, 0.75, 0.5, 0.25, 0.0};
  std::vector<TrafficMode> modes{TrafficMode::Standard, TrafficMode::Constrained};
  int runs = 20;
  std::uint64_t master_seed = 1;
  std::string out_dir = "results";
  int jobs = 1;
  int verbose = 0;
  /// Optional CSV overrides for the default anchored PER curves.
  std::string itsg5_per_curve;
  std::string ltev2x_per_curve;
};

/// Configuration problems; `errors()` lists every one found.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string s;
    for (const auto& e : errors) s += (s.empty() ? "" : "\n") + e;
    return s;
  }

  std::vector<std::string> errors_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.begin();
  auto e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return std::string(b, e);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

inline std::int64_t parse_int(const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw std::invalid_argument("expected an integer, got '" + s + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected true/false, got '" + s + "'");
}

inline std::string parse_string(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

inline std::vector<std::string> parse_list(const std::string& s) {
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') {
    throw std::invalid_argument("expected a list like [a, b], got '" + s + "'");
  }
  std::vector<std::string> items;
  const std::string body = trim(std::string_view(s).substr(1, s.size() - 2));
  if (body.empty()) return items;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

}  // namespace detail

inline TrafficMode parse_mode(const std::string& s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "standard") return TrafficMode::Standard;
  if (lower == "constrained") return TrafficMode::Constrained;
  throw std::invalid_argument("unknown mode '" + s +
                              "' (expected standard or constrained)");
}

/// Key -> setter table shared by the file loader and the docs.
inline std::map<std::string, std::function<void(ExperimentConfig&, const std::string&)>>
config_setters() {
  using namespace detail;
  using C = ExperimentConfig;
  std::map<std::string, std::function<void(C&, const std::string&)>> m;
#define COEXSIM_DOUBLE(key, expr) \
  m[key] = [](C& c, const std::string& v) { c.expr = parse_double(v); }
#define COEXSIM_INT(key, expr) \
  m[key] = [](C& c, const std::string& v) { c.expr = static_cast<decltype(c.expr)>(parse_int(v)); }
#define COEXSIM_BOOL(key, expr) \
  m[key] = [](C& c, const std::string& v) { c.expr = parse_bool(v); }

  COEXSIM_DOUBLE("length_m", engine.road.length_m);
  COEXSIM_INT("lanes_per_direction", engine.road.lanes_per_direction);
  COEXSIM_DOUBLE("lane_width_m", engine.road.lane_width_m);
  COEXSIM_DOUBLE("density_veh_per_km", engine.road.density_veh_per_km);
  COEXSIM_DOUBLE("speed_mps", engine.road.speed_mps);

  COEXSIM_DOUBLE("tx_power_dbm", engine.link.tx_power_dbm);
  COEXSIM_DOUBLE("tx_gain_db", engine.link.tx_gain_db);
  COEXSIM_DOUBLE("rx_gain_db", engine.link.rx_gain_db);
  COEXSIM_DOUBLE("noise_figure_db", engine.link.noise_figure_db);
  COEXSIM_DOUBLE("bandwidth_hz", engine.link.bandwidth_hz);
  COEXSIM_DOUBLE("carrier_ghz", engine.link.carrier_ghz);
  COEXSIM_DOUBLE("effective_antenna_height_m", engine.link.effective_antenna_height_m);
  COEXSIM_DOUBLE("min_distance_m", engine.link.min_distance_m);
  COEXSIM_DOUBLE("shadowing_sigma_db", engine.link.shadowing_sigma_db);
  COEXSIM_DOUBLE("shadowing_decorr_m", engine.link.shadowing_decorr_m);

  COEXSIM_INT("aifs_us", engine.csma.aifs_us);
  COEXSIM_INT("slot_us", engine.csma.slot_us);
  COEXSIM_INT("cw_max_slots", engine.csma.cw_max_slots);
  COEXSIM_DOUBLE("cca_threshold_dbm", engine.csma.cca_threshold_dbm);
  COEXSIM_DOUBLE("cca_preamble_threshold_dbm", engine.csma.cca_preamble_threshold_dbm);
  COEXSIM_DOUBLE("mcs_data_rate_bps", engine.csma.mcs_data_rate_bps);

  COEXSIM_DOUBLE("keep_probability", engine.sps.keep_probability);
  COEXSIM_DOUBLE("sensing_threshold_dbm", engine.sps.sensing_threshold_dbm);
  COEXSIM_INT("reselection_min", engine.sps.reselection_min);
  COEXSIM_INT("reselection_max", engine.sps.reselection_max);
  COEXSIM_DOUBLE("best_fraction", engine.sps.best_fraction);
  COEXSIM_INT("subchannel_size_rb", engine.sps.subchannel_size_rb);

  COEXSIM_INT("payload_bytes", engine.traffic.payload_bytes);
  COEXSIM_DOUBLE("base_period_ms", engine.traffic.base_period_ms);
  COEXSIM_DOUBLE("itsg5_jitter_ms", engine.traffic.itsg5_jitter_ms);
  COEXSIM_BOOL("per_packet_jitter", engine.traffic.per_packet_jitter);

  COEXSIM_DOUBLE("warm_up_s", engine.warm_up_s);
  COEXSIM_DOUBLE("measure_s", engine.measure_s);
  COEXSIM_DOUBLE("mobility_update_ms", engine.mobility_update_ms);
  COEXSIM_DOUBLE("relevance_margin_db", engine.relevance_margin_db);

  COEXSIM_DOUBLE("bin_width_m", engine.results.bin_width_m);
  COEXSIM_DOUBLE("max_distance_m", engine.results.max_distance_m);

  COEXSIM_INT("runs", runs);
  COEXSIM_INT("jobs", jobs);
#undef COEXSIM_DOUBLE
#undef COEXSIM_INT
#undef COEXSIM_BOOL

  m["master_seed"] = [](C& c, const std::string& v) { c.master_seed = parse_uint(v); };
  m["out_dir"] = [](C& c, const std::string& v) { c.out_dir = parse_string(v); };
  m["itsg5_per_curve"] = [](C& c, const std::string& v) {
    c.itsg5_per_curve = parse_string(v);
  };
  m["ltev2x_per_curve"] = [](C& c, const std::string& v) {
    c.ltev2x_per_curve = parse_string(v);
  };
  m["mix_fractions"] = [](C& c, const std::string& v) {
    c.mix_fractions.clear();
    for (const auto& item : parse_list(v)) c.mix_fractions.push_back(parse_double(item));
  };
  m["modes"] = [](C& c, const std::string& v) {
    c.modes.clear();
    for (const auto& item : parse_list(v)) c.modes.push_back(parse_mode(item));
  };
  return m;
}

/// Range checks over the whole experiment; empty when valid.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> e = validate(c.engine);
  if (c.mix_fractions.empty()) e.emplace_back("mix_fractions must not be empty");
  for (double f : c.mix_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      e.push_back("mix_fractions entry " + format_double(f) + " is outside [0, 1]");
    }
  }
  if (c.modes.empty()) e.emplace_back("modes must not be empty");
  if (c.runs < 1) e.emplace_back("runs must be >= 1");
  if (c.jobs < 1) e.emplace_back("jobs must be >= 1");
  return e;
}

/// Parses `key = value` lines over the defaults. Unknown keys and malformed
/// values are reported with their line number; range problems are collected
/// and reported together.
inline ExperimentConfig parse_config(std::istream& in,
                                     const std::string& origin = "<config>",
                                     ExperimentConfig cfg = {}) {
  const auto setters = config_setters();
  std::vector<std::string> errors;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no) + ": ";
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected 'key = value'");
      continue;
    }
    const std::string key = detail::trim(std::string_view(text).substr(0, eq));
    const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) {
      errors.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument& ex) {
      errors.push_back(where + key + ": " + ex.what());
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

/// Loads PER curve overrides named in the config.
inline void resolve_curves(ExperimentConfig& cfg) {
  std::vector<std::string> errors;
  auto load = [&](const std::string& path, PerCurve& into) {
    if (path.empty()) return;
    try {
      into = load_per_curve_csv(path);
    } catch (const std::exception& ex) {
      errors.emplace_back(ex.what());
    }
  };
  load(cfg.itsg5_per_curve, cfg.engine.itsg5_curve);
  load(cfg.ltev2x_per_curve, cfg.engine.ltev2x_curve);
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

inline void check(const ExperimentConfig& cfg) {
  auto errors = validate(cfg);
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file: " + path});
  ExperimentConfig cfg = parse_config(in, path);
  resolve_curves(cfg);
  check(cfg);
  return cfg;
}

}  // namespace coexsim
