#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "channel.hpp"
#include "mac_itsg5.hpp"
#include "mac_ltev2x.hpp"
#include "random.hpp"
#include "results.hpp"
#include "scenario.hpp"
#include "traffic.hpp"
#include "units.hpp"

namespace coexsim {

struct EngineConfig {
  RoadConfig road;
  LinkBudgetConfig link;
  CsmaConfig csma;
  SpsConfig sps;
  TrafficConfig traffic;
  ResultsConfig results;
  PerCurve itsg5_curve = PerCurve::itsg5_default();
  PerCurve ltev2x_curve = PerCurve::ltev2x_default();

  double warm_up_s = 1.0;
  double measure_s = 10.0;
  double mobility_update_ms = 100.0;
  /// Receivers more than this far below the noise floor are not evaluated.
  double relevance_margin_db = 10.0;

  /// Keep CCA busy intervals and transmission starts of ITS-G5 stations.
  bool record_csma_trace = false;
  /// Keep every SPS selection with its ranked candidate list.
  bool record_selections = false;
  /// Diagnostic load: every LTE-V2X station transmits in every TTI.
  bool lte_saturation = false;
  /// One line per processed event (time, kind, subject).
  std::ostream* event_log = nullptr;
};

/// Every problem with the configuration, empty when valid.
inline std::vector<std::string> validate(const EngineConfig& c) {
  std::vector<std::string> e;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) e.push_back(msg);
  };
  need(c.road.length_m > 0, "length_m must be > 0");
  need(c.road.lanes_per_direction >= 1, "lanes_per_direction must be >= 1");
  need(c.road.lane_width_m >= 0, "lane_width_m must be >= 0");
  need(c.road.density_veh_per_km > 0, "density_veh_per_km must be > 0");
  need(c.road.speed_mps >= 0, "speed_mps must be >= 0");
  need(c.link.bandwidth_hz > 0, "bandwidth_hz must be > 0");
  need(c.link.carrier_ghz > 0, "carrier_ghz must be > 0");
  need(c.link.effective_antenna_height_m > 0,
       "effective_antenna_height_m must be > 0");
  need(c.link.min_distance_m > 0, "min_distance_m must be > 0");
  need(c.link.shadowing_sigma_db >= 0, "shadowing_sigma_db must be >= 0");
  need(c.link.shadowing_decorr_m > 0, "shadowing_decorr_m must be > 0");
  need(c.csma.aifs_us > 0, "aifs_us must be > 0");
  need(c.csma.slot_us > 0, "slot_us must be > 0");
  need(c.csma.cw_max_slots >= 0, "cw_max_slots must be >= 0");
  need(c.csma.mcs_data_rate_bps > 0, "mcs_data_rate_bps must be > 0");
  need(c.sps.keep_probability >= 0 && c.sps.keep_probability <= 1,
       "keep_probability must be in [0, 1]");
  need(c.sps.reselection_min >= 1 &&
           c.sps.reselection_max >= c.sps.reselection_min,
       "reselection range must satisfy 1 <= min <= max");
  need(c.sps.period_ttis >= 1, "period_ttis must be >= 1");
  need(c.sps.sensing_window_ttis >= c.sps.period_ttis &&
           c.sps.sensing_window_ttis % c.sps.period_ttis == 0,
       "sensing_window_ttis must be a positive multiple of period_ttis");
  need(c.sps.best_fraction > 0 && c.sps.best_fraction <= 1,
       "best_fraction must be in (0, 1]");
  need(c.traffic.payload_bytes > 0, "payload_bytes must be > 0");
  need(c.traffic.base_period_ms > 0, "base_period_ms must be > 0");
  need(c.traffic.itsg5_jitter_ms >= 0 &&
           c.traffic.itsg5_jitter_ms < c.traffic.base_period_ms,
       "itsg5_jitter_ms must be in [0, base_period_ms)");
  need(c.sps.period_ttis * TtiGrid::tti_us == ms_to_us(c.traffic.base_period_ms),
       "period_ttis must match base_period_ms");
  need(c.results.bin_width_m > 0, "bin_width_m must be > 0");
  need(c.results.max_distance_m > 0, "max_distance_m must be > 0");
  need(c.warm_up_s >= 0, "warm_up_s must be >= 0");
  need(c.measure_s > 0, "measure_s must be > 0");
  need(c.mobility_update_ms > 0, "mobility_update_ms must be > 0");
  return e;
}

/// A frame on the air, with each station's received power frozen at start.
struct Transmission {
  std::int64_t id = 0;
  int source = -1;
  Tech tech = Tech::ItsG5;
  TimeUs start_us = 0;
  TimeUs end_us = 0;
  TimeUs generated_us = 0;
  /// Generated after warm-up, so it enters the metrics.
  bool counted = false;
  std::vector<double> rx_mw;
  std::vector<double> distance_m;

  TimeUs airtime() const { return end_us - start_us; }
};

inline TimeUs overlap_us(const Transmission& a, const Transmission& b) {
  const TimeUs lo = std::max(a.start_us, b.start_us);
  const TimeUs hi = std::min(a.end_us, b.end_us);
  return hi > lo ? hi - lo : 0;
}

struct ReceptionOutcome {
  int receiver = -1;
  double distance_m = 0.0;
  double sinr_db = 0.0;
  bool half_duplex = false;
  bool success = false;
};

struct DeliveryParams {
  const PerCurve* curve = nullptr;
  double noise_mw = 0.0;
  double relevance_mw = 0.0;
};

/// Outcome at every same-technology station that could hear `desired`.
/// `others` may include `desired` itself and non-overlapping frames; both are
/// skipped. Stations that transmitted during any overlap fail outright.
inline std::vector<ReceptionOutcome> deliver(
    const Transmission& desired, std::span<const Transmission* const> others,
    std::span<const Vehicle> vehicles, const DeliveryParams& p,
    RandomStream& rng) {
  std::vector<std::pair<const Transmission*, double>> overlapping;
  for (const Transmission* t : others) {
    if (t->id == desired.id) continue;
    const TimeUs ov = overlap_us(desired, *t);
    if (ov <= 0) continue;
    overlapping.emplace_back(
        t, static_cast<double>(ov) / static_cast<double>(desired.airtime()));
  }
  std::vector<ReceptionOutcome> out;
  for (const Vehicle& v : vehicles) {
    const auto r = static_cast<std::size_t>(v.id);
    if (v.id == desired.source || v.tech != desired.tech) continue;
    const double signal = desired.rx_mw[r];
    if (signal < p.relevance_mw) continue;
    ReceptionOutcome o;
    o.receiver = v.id;
    o.distance_m = desired.distance_m[r];
    double interference = 0.0;
    for (const auto& [t, frac] : overlapping) {
      if (t->source == v.id) o.half_duplex = true;
      interference += t->rx_mw[r] * frac;
    }
    o.sinr_db = linear_to_db(average_sinr_linear(signal, interference, p.noise_mw));
    if (!o.half_duplex) {
      o.success = decide_reception(p.curve->lookup(o.sinr_db), rng);
    }
    out.push_back(o);
  }
  return out;
}

/// Total in-band power at a station: noise plus every signal present at t.
inline double power_view_mw(std::span<const PowerInterval> signals, TimeUs t,
                            double noise_mw) {
  double total = noise_mw;
  for (const PowerInterval& s : signals) {
    if (s.start_us <= t && t < s.end_us) total += s.power_mw;
  }
  return total;
}

struct CsmaTrace {
  /// Per station: maximal CCA-busy intervals [begin, end).
  std::vector<std::vector<std::pair<TimeUs, TimeUs>>> busy;
  /// Per station: transmission start times.
  std::vector<std::vector<TimeUs>> tx_starts;
};

struct SelectionTrace {
  int node = -1;
  std::int64_t first_tti = 0;
  SelectionResult result;
};

struct TechCounters {
  std::int64_t generated = 0;
  std::int64_t transmitted = 0;
  std::int64_t replaced = 0;
  std::int64_t unsent = 0;
  std::int64_t outcomes = 0;
};

struct RunLog {
  int vehicles = 0;
  int itsg5_vehicles = 0;
  PrrHistogram histogram;
  /// Counted (post warm-up) CAMs only; index 0 ITS-G5, 1 LTE-V2X.
  std::array<TechCounters, 2> counters{};
  /// All transmissions per station, including warm-up.
  std::vector<std::int64_t> tx_per_node;
  std::int64_t sps_reselections = 0;
  std::int64_t sps_expiries = 0;
  std::int64_t events = 0;
  std::uint64_t digest = 0xcbf29ce484222325ULL;
  CsmaTrace csma_trace;
  std::vector<SelectionTrace> selections;

  const TechCounters& counter(Tech t) const {
    return counters[t == Tech::ItsG5 ? 0 : 1];
  }
};

/// One simulation run: a single-threaded event loop over explicit state.
class Simulator {
 public:
  enum class EventKind : std::uint8_t {
    CamGeneration,
    AccessTimer,
    CcaTransition,
    TxStart,
    TxEnd,
    TtiBoundary,
    MobilityUpdate,
    RunEnd,
  };

  static constexpr std::string_view kind_name(EventKind k) {
    switch (k) {
      case EventKind::CamGeneration: return "CamGeneration";
      case EventKind::AccessTimer: return "AccessTimer";
      case EventKind::CcaTransition: return "CcaTransition";
      case EventKind::TxStart: return "TxStart";
      case EventKind::TxEnd: return "TxEnd";
      case EventKind::TtiBoundary: return "TtiBoundary";
      case EventKind::MobilityUpdate: return "MobilityUpdate";
      case EventKind::RunEnd: return "RunEnd";
    }
    return "?";
  }

  /// Random fleet for the given ITS-G5 share.
  Simulator(EngineConfig cfg, double itsg5_fraction, std::uint64_t seed)
      : cfg_(checked(std::move(cfg))), seed_(seed) {
    RandomStream placement = RandomStream::substream(seed_, "placement");
    init(spawn(cfg_.road, itsg5_fraction, placement));
  }

  /// Explicit fleet; ids must be 0..n-1 in order.
  Simulator(EngineConfig cfg, std::vector<Vehicle> vehicles, std::uint64_t seed)
      : cfg_(checked(std::move(cfg))), seed_(seed) {
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      if (vehicles[i].id != static_cast<int>(i)) {
        throw std::invalid_argument("vehicle ids must be 0..n-1 in order");
      }
    }
    init(std::move(vehicles));
  }

  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  double noise_mw() const { return noise_mw_; }

  /// Current total in-band power at a station, in dBm.
  double power_view_dbm(int node) const {
    return mw_to_dbm(total_power_mw(static_cast<std::size_t>(node)));
  }

  RunLog run() {
    while (!queue_.empty()) {
      const Event ev = queue_.top();
      queue_.pop();
      assert(ev.time_us >= now_);
      now_ = ev.time_us;
      ++log_.events;
      if (cfg_.event_log) {
        *cfg_.event_log << ev.time_us << ' ' << kind_name(ev.kind) << ' '
                        << (ev.subject < 0 ? std::string("global")
                                           : std::to_string(ev.subject))
                        << '\n';
      }
      if (ev.kind == EventKind::RunEnd) break;
      dispatch(ev);
    }
    finish();
    return std::move(log_);
  }

 private:
  struct Event {
    TimeUs time_us;
    std::uint64_t sequence;
    EventKind kind;
    int subject;
    std::uint64_t payload;

    bool operator>(const Event& o) const {
      if (time_us != o.time_us) return time_us > o.time_us;
      return sequence > o.sequence;
    }
  };

  struct Node {
    std::optional<CamGenerator> traffic;
    std::optional<CsmaMac> csma;
    std::optional<SpsState> sps;
    bool transmitting = false;
    std::optional<CamPacket> lte_queued;
    TimeUs busy_since = -1;
  };

  static EngineConfig checked(EngineConfig cfg) {
    const auto errors = validate(cfg);
    if (!errors.empty()) {
      std::string msg = "invalid configuration:";
      for (const auto& e : errors) msg += "\n  " + e;
      throw std::invalid_argument(msg);
    }
    return cfg;
  }

  static std::size_t tech_index(Tech t) { return t == Tech::ItsG5 ? 0 : 1; }

  void init(std::vector<Vehicle> vehicles) {
    vehicles_ = std::move(vehicles);
    const auto n = vehicles_.size();
    const int ni = static_cast<int>(n);
    traffic_rng_ = RandomStream::substream(seed_, "traffic");
    backoff_rng_ = RandomStream::substream(seed_, "backoff");
    sps_rng_ = RandomStream::substream(seed_, "sps");
    reception_rng_ = RandomStream::substream(seed_, "reception");
    shadowing_rng_ = RandomStream::substream(seed_, "shadowing");

    noise_mw_ = dbm_to_mw(noise_floor_dbm(cfg_.link));
    relevance_mw_ = noise_mw_ * db_to_linear(-cfg_.relevance_margin_db);
    cca_threshold_mw_ = dbm_to_mw(cfg_.csma.cca_threshold_dbm);
    preamble_threshold_mw_ = dbm_to_mw(cfg_.csma.cca_preamble_threshold_dbm);
    sensing_threshold_mw_ = dbm_to_mw(cfg_.sps.sensing_threshold_dbm);
    warm_up_us_ = static_cast<TimeUs>(std::llround(cfg_.warm_up_s * kUsPerS));
    end_us_ = warm_up_us_ +
              static_cast<TimeUs>(std::llround(cfg_.measure_s * kUsPerS));
    itsg5_airtime_us_ = airtime_us(cfg_.traffic.payload_bytes, cfg_.csma);

    log_.vehicles = ni;
    log_.histogram = PrrHistogram(cfg_.results);
    log_.tx_per_node.assign(n, 0);
    if (cfg_.record_csma_trace) {
      log_.csma_trace.busy.assign(n, {});
      log_.csma_trace.tx_starts.assign(n, {});
    }

    shadow_ = ShadowingField(ni, cfg_.link.shadowing_sigma_db,
                             cfg_.link.shadowing_decorr_m, shadowing_rng_);
    rx_mw_.assign(n * n, 0.0);
    dist_m_.assign(n * n, 0.0);
    refresh_link_matrix();

    nodes_.resize(n);
    bool any_lte = false;
    for (const Vehicle& v : vehicles_) {
      Node& node = nodes_[static_cast<std::size_t>(v.id)];
      if (v.tech == Tech::ItsG5) {
        ++log_.itsg5_vehicles;
        node.csma.emplace(cfg_.csma);
      } else {
        any_lte = true;
        node.sps.emplace(cfg_.sps, ni, noise_mw_);
      }
      if (v.tech == Tech::LteV2x && cfg_.lte_saturation) {
        push(0, EventKind::TxStart, v.id, 0);
        continue;
      }
      node.traffic.emplace(v.id, v.tech, cfg_.traffic, traffic_rng_);
      push(node.traffic->next_generation_us(), EventKind::CamGeneration, v.id, 0);
    }
    if (any_lte) {
      push(TtiGrid::occupied_us, EventKind::TtiBoundary, -1, 0);
    }
    const TimeUs mob = ms_to_us(cfg_.mobility_update_ms);
    if (n > 1) push(mob, EventKind::MobilityUpdate, -1, 0);
    push(n == 0 ? 0 : end_us_, EventKind::RunEnd, -1, 0);
  }

  void push(TimeUs t, EventKind kind, int subject, std::uint64_t payload) {
    queue_.push(Event{t, next_sequence_++, kind, subject, payload});
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case EventKind::CamGeneration: on_generation(ev.subject); break;
      case EventKind::AccessTimer: on_access_timer(ev.subject, ev.payload); break;
      case EventKind::CcaTransition: on_cca_transition(); break;
      case EventKind::TxStart: on_lte_tx_start(ev.subject); break;
      case EventKind::TxEnd: on_tx_end(static_cast<std::int64_t>(ev.payload)); break;
      case EventKind::TtiBoundary: on_tti_boundary(); break;
      case EventKind::MobilityUpdate: on_mobility(); break;
      case EventKind::RunEnd: break;
    }
  }

  // --- link state -------------------------------------------------------

  void refresh_link_matrix() {
    const auto n = vehicles_.size();
    for (std::size_t a = 0; a < n; ++a) {
      rx_mw_[a * n + a] = 0.0;
      for (std::size_t b = a + 1; b < n; ++b) {
        const double d = distance_m(vehicles_[a], vehicles_[b], cfg_.road);
        const double p = dbm_to_mw(rx_power_dbm(
            d, shadow_.value(static_cast<int>(a), static_cast<int>(b)), cfg_.link));
        rx_mw_[a * n + b] = rx_mw_[b * n + a] = p;
        dist_m_[a * n + b] = dist_m_[b * n + a] = d;
      }
    }
  }

  void on_mobility() {
    const double dt_s = cfg_.mobility_update_ms / 1000.0;
    advance(vehicles_, cfg_.road, dt_s);
    const double step = cfg_.road.speed_mps * dt_s;
    shadow_.step([step](int, int) { return step + step; }, shadowing_rng_);
    refresh_link_matrix();
    push(now_ + ms_to_us(cfg_.mobility_update_ms), EventKind::MobilityUpdate, -1, 0);
  }

  double total_power_mw(std::size_t node) const {
    double total = noise_mw_;
    for (std::int64_t id : active_) total += tx(id).rx_mw[node];
    return total;
  }

  bool cca_busy_at(std::size_t node) const {
    double total = noise_mw_;
    for (std::int64_t id : active_) {
      const Transmission& t = tx(id);
      const double p = t.rx_mw[node];
      if (t.tech == Tech::ItsG5 && p >= preamble_threshold_mw_) return true;
      total += p;
    }
    return total >= cca_threshold_mw_;
  }

  // --- transmissions ----------------------------------------------------

  Transmission& tx(std::int64_t id) {
    return recent_[static_cast<std::size_t>(id - recent_front_id_)];
  }
  const Transmission& tx(std::int64_t id) const {
    return recent_[static_cast<std::size_t>(id - recent_front_id_)];
  }

  std::int64_t start_transmission(int source, const CamPacket& packet,
                                  TimeUs airtime) {
    const auto n = vehicles_.size();
    const auto s = static_cast<std::size_t>(source);
    Transmission t;
    t.id = next_tx_id_++;
    t.source = source;
    t.tech = vehicles_[s].tech;
    t.start_us = now_;
    t.end_us = now_ + airtime;
    t.generated_us = packet.generated_us;
    t.counted = packet.generated_us >= warm_up_us_ && packet.source >= 0;
    t.rx_mw.assign(rx_mw_.begin() + static_cast<std::ptrdiff_t>(s * n),
                   rx_mw_.begin() + static_cast<std::ptrdiff_t>((s + 1) * n));
    t.distance_m.assign(dist_m_.begin() + static_cast<std::ptrdiff_t>(s * n),
                        dist_m_.begin() + static_cast<std::ptrdiff_t>((s + 1) * n));
    if (recent_.empty()) recent_front_id_ = t.id;
    recent_.push_back(std::move(t));
    const Transmission& placed = recent_.back();
    active_.push_back(placed.id);
    nodes_[s].transmitting = true;
    ++log_.tx_per_node[s];
    if (placed.counted) ++log_.counters[tech_index(placed.tech)].transmitted;
    if (cfg_.record_csma_trace && placed.tech == Tech::ItsG5) {
      log_.csma_trace.tx_starts[s].push_back(now_);
    }
    push(placed.end_us, EventKind::TxEnd, source, static_cast<std::uint64_t>(placed.id));
    request_cca_update();
    return placed.id;
  }

  void request_cca_update() {
    if (cca_update_at_ == now_ || log_.itsg5_vehicles == 0) return;
    cca_update_at_ = now_;
    push(now_, EventKind::CcaTransition, -1, 0);
  }

  void on_tx_end(std::int64_t id) {
    const Transmission& t = tx(id);
    active_.erase(std::find(active_.begin(), active_.end(), id));
    const auto s = static_cast<std::size_t>(t.source);
    nodes_[s].transmitting = false;

    std::vector<const Transmission*> others;
    others.reserve(recent_.size());
    for (const Transmission& o : recent_) {
      if (o.start_us < t.end_us && o.end_us > t.start_us) others.push_back(&o);
    }
    const PerCurve& curve =
        t.tech == Tech::ItsG5 ? cfg_.itsg5_curve : cfg_.ltev2x_curve;
    const auto outcomes = deliver(t, others, vehicles_,
                                  DeliveryParams{&curve, noise_mw_, relevance_mw_},
                                  reception_rng_);
    auto& counters = log_.counters[tech_index(t.tech)];
    for (const ReceptionOutcome& o : outcomes) {
      digest(static_cast<std::uint64_t>(t.id));
      digest(static_cast<std::uint64_t>(o.receiver) << 1 | (o.success ? 1U : 0U));
      if (t.counted) {
        ++counters.outcomes;
        log_.histogram.record(t.tech, o.distance_m, o.success);
      }
    }

    if (t.tech == Tech::LteV2x) {
      const std::int64_t tti = t.start_us / TtiGrid::tti_us;
      for (const Vehicle& v : vehicles_) {
        const auto r = static_cast<std::size_t>(v.id);
        if (v.tech != Tech::LteV2x || v.id == t.source) continue;
        if (t.rx_mw[r] < sensing_threshold_mw_) continue;
        bool blind = false;
        for (const Transmission* o : others) blind = blind || o->source == v.id;
        if (!blind) nodes_[r].sps->decode_reservation(t.source, tti, mw_to_dbm(t.rx_mw[r]));
      }
    } else {
      Node& node = nodes_[s];
      if (auto timer = node.csma->on_transmission_complete(now_, backoff_rng_)) {
        push(timer->at_us, EventKind::AccessTimer, t.source, timer->epoch);
      }
    }
    request_cca_update();
    prune();
  }

  /// Drops frames no longer needed for delivery or TTI measurement.
  void prune() {
    TimeUs keep_after = now_ - TtiGrid::tti_us;
    for (std::int64_t id : active_) keep_after = std::min(keep_after, tx(id).start_us);
    while (!recent_.empty() && recent_.front().end_us <= keep_after) {
      recent_.pop_front();
      ++recent_front_id_;
    }
  }

  // --- ITS-G5 -----------------------------------------------------------

  void on_cca_transition() {
    for (const Vehicle& v : vehicles_) {
      if (v.tech != Tech::ItsG5) continue;
      const auto i = static_cast<std::size_t>(v.id);
      Node& node = nodes_[i];
      const bool busy = cca_busy_at(i);
      if (busy == node.csma->channel_busy()) continue;
      if (cfg_.record_csma_trace) {
        if (busy) {
          node.busy_since = now_;
        } else {
          log_.csma_trace.busy[i].emplace_back(node.busy_since, now_);
          node.busy_since = -1;
        }
      }
      if (auto timer = node.csma->on_cca(busy, now_, backoff_rng_)) {
        push(timer->at_us, EventKind::AccessTimer, v.id, timer->epoch);
      }
    }
  }

  void on_access_timer(int subject, std::uint64_t epoch) {
    Node& node = nodes_[static_cast<std::size_t>(subject)];
    if (auto packet = node.csma->on_timer(epoch, now_)) {
      start_transmission(subject, *packet, itsg5_airtime_us_);
    }
  }

  // --- traffic ----------------------------------------------------------

  void on_generation(int subject) {
    const auto s = static_cast<std::size_t>(subject);
    Node& node = nodes_[s];
    const auto cam = node.traffic->generate(traffic_rng_);
    const CamPacket packet{cam.source, cam.generated_us, cam.payload_bytes};
    const bool counted = packet.generated_us >= warm_up_us_;
    const Tech tech = vehicles_[s].tech;
    auto& counters = log_.counters[tech_index(tech)];
    if (counted) ++counters.generated;
    push(node.traffic->next_generation_us(), EventKind::CamGeneration, subject, 0);

    if (tech == Tech::ItsG5) {
      CsmaMac& mac = *node.csma;
      if (mac.has_pending() && mac.pending()->generated_us >= warm_up_us_) {
        ++counters.replaced;
      }
      if (auto timer = mac.on_packet_ready(packet, now_, backoff_rng_)) {
        push(timer->at_us, EventKind::AccessTimer, subject, timer->epoch);
      }
      return;
    }

    SpsState& sps = *node.sps;
    const std::int64_t first_tti = TtiGrid::first_at_or_after(now_);
    if (auto sel = sps.on_period_boundary(first_tti, sps_rng_)) {
      if (cfg_.record_selections) {
        log_.selections.push_back(SelectionTrace{subject, first_tti, std::move(*sel)});
      }
    }
    if (node.lte_queued && node.lte_queued->generated_us >= warm_up_us_) {
      ++counters.replaced;
    }
    const bool already_scheduled = node.lte_queued.has_value();
    node.lte_queued = packet;
    if (!already_scheduled) {
      const std::int64_t tti = sps.next_tx_tti(first_tti);
      push(TtiGrid::start_of(tti), EventKind::TxStart, subject, 0);
    }
  }

  // --- LTE-V2X ----------------------------------------------------------

  void on_lte_tx_start(int subject) {
    Node& node = nodes_[static_cast<std::size_t>(subject)];
    if (cfg_.lte_saturation) {
      start_transmission(subject, CamPacket{-1, now_, cfg_.traffic.payload_bytes},
                         TtiGrid::occupied_us);
      push(now_ + TtiGrid::tti_us, EventKind::TxStart, subject, 0);
      return;
    }
    if (!node.lte_queued) return;
    const CamPacket packet = *node.lte_queued;
    node.lte_queued.reset();
    start_transmission(subject, packet, TtiGrid::occupied_us);
  }

  /// Fires at the end of the occupied window of TTI k and records it.
  void on_tti_boundary() {
    const std::int64_t tti = now_ / TtiGrid::tti_us;
    const TimeUs from = TtiGrid::start_of(tti);
    const TimeUs to = from + TtiGrid::occupied_us;
    for (const Vehicle& v : vehicles_) {
      if (v.tech != Tech::LteV2x) continue;
      const auto r = static_cast<std::size_t>(v.id);
      bool blind = false;
      double energy = 0.0;
      for (const Transmission& t : recent_) {
        const TimeUs lo = std::max(from, t.start_us);
        const TimeUs hi = std::min(to, t.end_us);
        if (hi <= lo) continue;
        if (t.source == v.id) {
          blind = true;
          break;
        }
        energy += t.rx_mw[r] * static_cast<double>(hi - lo);
      }
      SpsState& sps = *nodes_[r].sps;
      if (blind) {
        sps.record_blind(tti);
      } else {
        sps.record_rssi(tti, noise_mw_ + energy / static_cast<double>(to - from));
      }
    }
    push(now_ + TtiGrid::tti_us, EventKind::TtiBoundary, -1, 0);
  }

  // --- bookkeeping ------------------------------------------------------

  void digest(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      log_.digest ^= (v >> (8 * i)) & 0xffU;
      log_.digest *= 0x100000001b3ULL;
    }
  }

  void finish() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& node = nodes_[i];
      const Tech tech = vehicles_[i].tech;
      auto& counters = log_.counters[tech_index(tech)];
      if (node.csma && node.csma->has_pending() &&
          node.csma->pending()->generated_us >= warm_up_us_) {
        ++counters.unsent;
      }
      if (node.lte_queued && node.lte_queued->generated_us >= warm_up_us_) {
        ++counters.unsent;
      }
      if (node.sps) {
        log_.sps_reselections += node.sps->reselections();
        log_.sps_expiries += node.sps->counter_expiries();
      }
      if (cfg_.record_csma_trace && node.busy_since >= 0) {
        log_.csma_trace.busy[i].emplace_back(node.busy_since, now_);
      }
    }
    // Frames still on the air at the end never complete.
    for (std::int64_t id : active_) {
      const Transmission& t = tx(id);
      if (t.counted) {
        auto& counters = log_.counters[tech_index(t.tech)];
        --counters.transmitted;
        ++counters.unsent;
      }
    }
    digest(static_cast<std::uint64_t>(log_.events));
  }

  EngineConfig cfg_;
  std::uint64_t seed_;
  std::vector<Vehicle> vehicles_;
  std::vector<Node> nodes_;
  ShadowingField shadow_;
  std::vector<double> rx_mw_;
  std::vector<double> dist_m_;

  RandomStream traffic_rng_;
  RandomStream backoff_rng_;
  RandomStream sps_rng_;
  RandomStream reception_rng_;
  RandomStream shadowing_rng_;

  double noise_mw_ = 0.0;
  double relevance_mw_ = 0.0;
  double cca_threshold_mw_ = 0.0;
  double preamble_threshold_mw_ = 0.0;
  double sensing_threshold_mw_ = 0.0;
  TimeUs warm_up_us_ = 0;
  TimeUs end_us_ = 0;
  TimeUs itsg5_airtime_us_ = 0;

  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t next_sequence_ = 0;
  TimeUs now_ = 0;
  TimeUs cca_update_at_ = -1;

  std::deque<Transmission> recent_;
  std::int64_t recent_front_id_ = 0;
  std::int64_t next_tx_id_ = 0;
  std::vector<std::int64_t> active_;

  RunLog log_;
};

/// Convenience wrapper: one run with a random fleet.
inline RunLog run(const EngineConfig& cfg, double itsg5_fraction,
                  std::uint64_t seed) {
  return Simulator(cfg, itsg5_fraction, seed).run();
}

}  // namespace coexsim
