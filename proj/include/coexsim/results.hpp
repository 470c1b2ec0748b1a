#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "units.hpp"

namespace coexsim {

struct ResultsConfig {
  double bin_width_m = 10.0;
  double max_distance_m = 500.0;
};

/// Success and opportunity counts per (technology, distance bin).
class PrrHistogram {
 public:
  struct Bin {
    std::int64_t opportunities = 0;
    std::int64_t successes = 0;
  };

  PrrHistogram() : PrrHistogram(ResultsConfig{}) {}

  explicit PrrHistogram(const ResultsConfig& cfg)
      : bin_width_m_(cfg.bin_width_m), max_distance_m_(cfg.max_distance_m) {
    const auto n = static_cast<std::size_t>(
        std::ceil(max_distance_m_ / bin_width_m_ - 1e-9));
    for (auto& bins : bins_) bins.assign(n, Bin{});
  }

  double bin_width_m() const { return bin_width_m_; }
  double max_distance_m() const { return max_distance_m_; }
  std::size_t bin_count() const { return bins_[0].size(); }

  /// Lower-inclusive bins; a receiver exactly at max_distance lands in the
  /// last bin, anything farther is ignored.
  std::optional<std::size_t> bin_of(double distance_m) const {
    if (distance_m < 0.0 || distance_m > max_distance_m_) return std::nullopt;
    auto i = static_cast<std::size_t>(std::floor(distance_m / bin_width_m_));
    if (i >= bin_count()) i = bin_count() - 1;
    return i;
  }

  void record(Tech tx_tech, double distance_m, bool success) {
    const auto i = bin_of(distance_m);
    if (!i) return;
    Bin& b = bins_[index(tx_tech)][*i];
    ++b.opportunities;
    if (success) ++b.successes;
  }

  const Bin& bin(Tech tech, std::size_t i) const { return bins_[index(tech)][i]; }

  std::optional<double> prr(Tech tech, std::size_t i) const {
    const Bin& b = bin(tech, i);
    if (b.opportunities == 0) return std::nullopt;
    return static_cast<double>(b.successes) / static_cast<double>(b.opportunities);
  }

  std::int64_t total_opportunities(Tech tech) const {
    std::int64_t n = 0;
    for (const Bin& b : bins_[index(tech)]) n += b.opportunities;
    return n;
  }

  /// Counter-wise sum; associative and commutative.
  void merge(const PrrHistogram& other) {
    if (other.bin_count() != bin_count() || other.bin_width_m_ != bin_width_m_) {
      throw std::invalid_argument("histogram binning mismatch");
    }
    for (std::size_t t = 0; t < bins_.size(); ++t) {
      for (std::size_t i = 0; i < bin_count(); ++i) {
        bins_[t][i].opportunities += other.bins_[t][i].opportunities;
        bins_[t][i].successes += other.bins_[t][i].successes;
      }
    }
  }

  friend bool operator==(const PrrHistogram& a, const PrrHistogram& b) {
    if (a.bin_count() != b.bin_count()) return false;
    for (std::size_t t = 0; t < a.bins_.size(); ++t) {
      for (std::size_t i = 0; i < a.bin_count(); ++i) {
        if (a.bins_[t][i].opportunities != b.bins_[t][i].opportunities ||
            a.bins_[t][i].successes != b.bins_[t][i].successes) {
          return false;
        }
      }
    }
    return true;
  }

 private:
  static std::size_t index(Tech t) { return t == Tech::ItsG5 ? 0 : 1; }

  double bin_width_m_;
  double max_distance_m_;
  std::array<std::vector<Bin>, 2> bins_;
};

struct AggregateBin {
  double bin_lo_m = 0.0;
  double bin_hi_m = 0.0;
  std::int64_t opportunities = 0;
  std::int64_t successes = 0;
  /// Pooled ratio over all runs; empty when nothing was observed.
  std::optional<double> prr;
  /// Mean and sample std of per-run ratios over runs with observations.
  double run_mean = 0.0;
  double run_std = 0.0;
};

struct TechAggregate {
  Tech tech = Tech::ItsG5;
  std::vector<AggregateBin> bins;
};

struct PrrAggregate {
  int runs = 0;
  std::vector<TechAggregate> techs;

  const TechAggregate* find(Tech t) const {
    for (const auto& ta : techs) {
      if (ta.tech == t) return &ta;
    }
    return nullptr;
  }

  /// Pooled PRR in the bin containing distance_m.
  std::optional<double> prr_at(Tech t, double distance_m) const {
    const TechAggregate* ta = find(t);
    if (!ta) return std::nullopt;
    for (const auto& b : ta->bins) {
      if (distance_m >= b.bin_lo_m && distance_m < b.bin_hi_m) return b.prr;
    }
    return std::nullopt;
  }
};

inline PrrAggregate aggregate(const std::vector<PrrHistogram>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate needs at least one run");
  PrrAggregate out;
  out.runs = static_cast<int>(runs.size());
  const PrrHistogram& first = runs.front();
  for (Tech tech : {Tech::ItsG5, Tech::LteV2x}) {
    bool seen = false;
    for (const auto& h : runs) seen = seen || h.total_opportunities(tech) > 0;
    if (!seen) continue;
    TechAggregate ta;
    ta.tech = tech;
    for (std::size_t i = 0; i < first.bin_count(); ++i) {
      AggregateBin b;
      b.bin_lo_m = static_cast<double>(i) * first.bin_width_m();
      b.bin_hi_m = static_cast<double>(i + 1) * first.bin_width_m();
      std::vector<double> per_run;
      for (const auto& h : runs) {
        b.opportunities += h.bin(tech, i).opportunities;
        b.successes += h.bin(tech, i).successes;
        if (auto p = h.prr(tech, i)) per_run.push_back(*p);
      }
      if (b.opportunities > 0) {
        b.prr = static_cast<double>(b.successes) /
                static_cast<double>(b.opportunities);
      }
      if (!per_run.empty()) {
        // Welford: identical runs give exactly zero spread
        double mean = 0.0;
        double m2 = 0.0;
        double n = 0.0;
        for (double p : per_run) {
          n += 1.0;
          const double delta = p - mean;
          mean += delta / n;
          m2 += delta * (p - mean);
        }
        b.run_mean = mean;
        if (per_run.size() > 1) {
          b.run_std = std::sqrt(m2 / (n - 1.0));
        }
      }
      ta.bins.push_back(b);
    }
    out.techs.push_back(std::move(ta));
  }
  return out;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf.data(), ptr);
}

inline constexpr const char* kPrrCsvHeader =
    "tech,bin_lo_m,bin_hi_m,prr,prr_std,opportunities,runs";

inline void write_prr_csv(std::ostream& os, const PrrAggregate& agg) {
  os << kPrrCsvHeader << '\n';
  for (const auto& ta : agg.techs) {
    for (const auto& b : ta.bins) {
      os << to_string(ta.tech) << ',' << format_double(b.bin_lo_m) << ','
         << format_double(b.bin_hi_m) << ','
         << (b.prr ? format_double(*b.prr) : std::string{}) << ','
         << format_double(b.run_std) << ',' << b.opportunities << ','
         << agg.runs << '\n';
    }
  }
}

struct PrrCsvRow {
  std::string tech;
  double bin_lo_m = 0.0;
  double bin_hi_m = 0.0;
  std::optional<double> prr;
  double prr_std = 0.0;
  std::int64_t opportunities = 0;
  int runs = 0;
};

inline std::vector<PrrCsvRow> parse_prr_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kPrrCsvHeader) {
    throw std::runtime_error("PRR CSV: bad or missing header");
  }
  std::vector<PrrCsvRow> rows;
  int line_no = 1;
  auto to_double = [&](const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw std::runtime_error("PRR CSV line " + std::to_string(line_no) +
                               ": bad number '" + s + "'");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 7) {
      throw std::runtime_error("PRR CSV line " + std::to_string(line_no) +
                               ": expected 7 fields");
    }
    PrrCsvRow r;
    r.tech = f[0];
    r.bin_lo_m = to_double(f[1]);
    r.bin_hi_m = to_double(f[2]);
    if (!f[3].empty()) r.prr = to_double(f[3]);
    r.prr_std = to_double(f[4]);
    r.opportunities = static_cast<std::int64_t>(to_double(f[5]));
    r.runs = static_cast<int>(to_double(f[6]));
    rows.push_back(r);
  }
  return rows;
}

/// File name for one (mode, mix) table, e.g. prr_standard_50.csv.
inline std::string prr_csv_name(TrafficMode mode, double itsg5_fraction) {
  return "prr_" + std::string(to_string(mode)) + "_" +
         std::to_string(std::llround(itsg5_fraction * 100.0)) + ".csv";
}

struct EmittedTable {
  TrafficMode mode;
  double itsg5_fraction;
  PrrAggregate aggregate;
};

/// Gnuplot script drawing PRR vs distance: one page per (mode, technology),
/// one curve per technology mix.
inline std::string plot_script(const std::vector<EmittedTable>& tables) {
  std::ostringstream os;
  os << "# gnuplot -p plot_prr.gp\n"
     << "set datafile separator ','\n"
     << "set key bottom left\n"
     << "set xlabel 'Distance [m]'\n"
     << "set ylabel 'Packet reception ratio'\n"
     << "set yrange [0:1]\n"
     << "set grid\n"
     << "set terminal pngcairo size 900,600\n";
  for (TrafficMode mode : {TrafficMode::Standard, TrafficMode::Constrained}) {
    for (Tech tech : {Tech::ItsG5, Tech::LteV2x}) {
      std::vector<const EmittedTable*> curves;
      for (const auto& t : tables) {
        if (t.mode == mode && t.aggregate.find(tech)) curves.push_back(&t);
      }
      if (curves.empty()) continue;
      const std::string name =
          std::string(to_string(mode)) + "_" + std::string(to_string(tech));
      os << "\nset output 'prr_" << name << ".png'\n"
         << "set title '" << to_string(tech) << ", " << to_string(mode)
         << " generation'\n"
         << "plot ";
      for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto pct = std::llround(curves[i]->itsg5_fraction * 100.0);
        os << (i ? ", \\\n     " : "") << "'"
           << prr_csv_name(mode, curves[i]->itsg5_fraction)
           << "' using ((strcol(1) eq '" << to_string(tech)
           << "') ? ($2+$3)/2 : NaN):4 with lines title '" << pct
           << "% ITS-G5'";
      }
      os << '\n';
    }
  }
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Writes one CSV per table plus plot_prr.gp into out_dir.
inline void emit(const std::vector<EmittedTable>& tables,
                 const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create " + out_dir.string() + ": " +
                             ec.message());
  }
  for (const auto& t : tables) {
    std::ostringstream os;
    write_prr_csv(os, t.aggregate);
    write_text_file(out_dir / prr_csv_name(t.mode, t.itsg5_fraction), os.str());
  }
  write_text_file(out_dir / "plot_prr.gp", plot_script(tables));
}

}  // namespace coexsim
