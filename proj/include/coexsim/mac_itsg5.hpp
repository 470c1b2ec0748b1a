#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "random.hpp"
#include "units.hpp"

namespace coexsim {

struct CsmaConfig {
  TimeUs aifs_us = 110;
  TimeUs slot_us = 13;
  int cw_max_slots = 15;
  /// Energy detection: total in-band power from any source.
  double cca_threshold_dbm = -65.0;
  /// Preamble detection: a single ITS-G5 frame received at or above this
  /// level also holds the channel busy.
  double cca_preamble_threshold_dbm = -95.0;
  /// QPSK 1/2 in a 10 MHz channel.
  double mcs_data_rate_bps = 6.0e6;
  TimeUs preamble_us = 40;
  TimeUs symbol_us = 8;
  int service_tail_bits = 22;
};

inline bool cca_busy(double total_inband_power_dbm, const CsmaConfig& cfg) {
  return total_inband_power_dbm >= cfg.cca_threshold_dbm;
}

/// Energy detection on the total, or preamble detection on the strongest
/// ITS-G5 frame present. LTE-V2X signals only ever count through the total.
inline bool cca_busy(double total_inband_power_dbm,
                     double strongest_itsg5_frame_dbm, const CsmaConfig& cfg) {
  return cca_busy(total_inband_power_dbm, cfg) ||
         strongest_itsg5_frame_dbm >= cfg.cca_preamble_threshold_dbm;
}

/// OFDM frame duration: preamble plus whole data symbols.
inline TimeUs airtime_us(int payload_bytes, const CsmaConfig& cfg) {
  const auto bits_per_symbol = static_cast<std::int64_t>(std::llround(
      cfg.mcs_data_rate_bps * static_cast<double>(cfg.symbol_us) * 1e-6));
  const std::int64_t bits = cfg.service_tail_bits + 8LL * payload_bytes;
  const std::int64_t symbols = (bits + bits_per_symbol - 1) / bits_per_symbol;
  return cfg.preamble_us + cfg.symbol_us * symbols;
}

/// A CAM waiting for, or occupying, the channel.
struct CamPacket {
  int source = -1;
  TimeUs generated_us = 0;
  int payload_bytes = 350;
};

/// Timer request handed back to the event loop. Only the most recent epoch
/// is live; older timers are ignored when they fire.
struct MacTimer {
  TimeUs at_us = 0;
  std::uint64_t epoch = 0;
};

/// Per-station CSMA/CA for unacknowledged broadcast with a one-packet queue.
///
/// The AIFS wait and the slot countdown form one idle interval: once the
/// channel is idle at time t with k slots left, the frame goes out at
/// t + AIFS + k * slot unless CCA turns busy first. A busy report freezes the
/// countdown, keeping only the fully elapsed slots.
class CsmaMac {
 public:
  enum class Phase : std::uint8_t { Idle, Deferring, Backoff, Transmitting };

  struct Stats {
    std::int64_t replaced = 0;
    std::int64_t transmitted = 0;
    std::int64_t slots_drawn = 0;
    std::int64_t slots_counted = 0;
  };

  explicit CsmaMac(CsmaConfig cfg = {}) : cfg_(cfg) {}

  Phase phase() const { return phase_; }
  bool channel_busy() const { return busy_; }
  bool has_pending() const { return pending_.has_value(); }
  const std::optional<CamPacket>& pending() const { return pending_; }
  int backoff_slots_remaining() const { return backoff_remaining_; }
  const Stats& stats() const { return stats_; }
  const CsmaConfig& config() const { return cfg_; }

  /// A new CAM; replaces any packet still waiting for the channel.
  std::optional<MacTimer> on_packet_ready(const CamPacket& packet, TimeUs now,
                                          RandomStream& rng) {
    if (pending_) ++stats_.replaced;
    const bool fresh = !pending_;
    pending_ = packet;
    if (phase_ == Phase::Transmitting || !fresh) return std::nullopt;
    return begin_access(now, rng);
  }

  /// Clear-channel assessment changed state.
  std::optional<MacTimer> on_cca(bool busy, TimeUs now, RandomStream& rng) {
    if (busy == busy_) return std::nullopt;
    busy_ = busy;
    if (busy) {
      if (phase_ == Phase::Backoff) freeze(now);
      return std::nullopt;
    }
    if (phase_ == Phase::Deferring) return start_countdown(now, rng);
    return std::nullopt;
  }

  /// A previously requested timer fired; returns the packet to put on air.
  std::optional<CamPacket> on_timer(std::uint64_t epoch, TimeUs now) {
    if (epoch != epoch_ || phase_ != Phase::Backoff || !pending_) {
      return std::nullopt;
    }
    (void)now;
    stats_.slots_counted += backoff_remaining_;
    backoff_remaining_ = 0;
    backoff_ = Backoff::None;
    phase_ = Phase::Transmitting;
    ++epoch_;
    ++stats_.transmitted;
    CamPacket out = *pending_;
    pending_.reset();
    return out;
  }

  /// Own frame left the air. No ACK and no retransmission.
  std::optional<MacTimer> on_transmission_complete(TimeUs now,
                                                   RandomStream& rng) {
    phase_ = Phase::Idle;
    if (!pending_) return std::nullopt;
    return begin_access(now, rng);
  }

 private:
  enum class Backoff : std::uint8_t { None, ToDraw, Drawn };

  std::optional<MacTimer> begin_access(TimeUs now, RandomStream& rng) {
    if (busy_) {
      phase_ = Phase::Deferring;
      backoff_ = Backoff::ToDraw;
      return std::nullopt;
    }
    backoff_ = Backoff::None;
    backoff_remaining_ = 0;
    return start_countdown(now, rng);
  }

  std::optional<MacTimer> start_countdown(TimeUs now, RandomStream& rng) {
    if (backoff_ == Backoff::ToDraw) {
      backoff_remaining_ =
          static_cast<int>(rng.uniform_int(0, cfg_.cw_max_slots));
      stats_.slots_drawn += backoff_remaining_;
      backoff_ = Backoff::Drawn;
    }
    phase_ = Phase::Backoff;
    idle_since_ = now;
    ++epoch_;
    return MacTimer{now + cfg_.aifs_us + cfg_.slot_us * backoff_remaining_,
                    epoch_};
  }

  void freeze(TimeUs now) {
    const TimeUs counted_from = idle_since_ + cfg_.aifs_us;
    if (now > counted_from) {
      const auto slots = static_cast<int>((now - counted_from) / cfg_.slot_us);
      const int used = slots < backoff_remaining_ ? slots : backoff_remaining_;
      backoff_remaining_ -= used;
      stats_.slots_counted += used;
    }
    if (backoff_ == Backoff::None) backoff_ = Backoff::ToDraw;
    phase_ = Phase::Deferring;
    ++epoch_;
  }

  CsmaConfig cfg_;
  Phase phase_ = Phase::Idle;
  bool busy_ = false;
  Backoff backoff_ = Backoff::None;
  int backoff_remaining_ = 0;
  TimeUs idle_since_ = 0;
  std::uint64_t epoch_ = 0;
  std::optional<CamPacket> pending_;
  Stats stats_;
};

}  // namespace coexsim
