#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "engine.hpp"
#include "random.hpp"
#include "results.hpp"

namespace coexsim {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2 };

/// Seed of one run. Injective in (mix, mode, run) for a given master seed:
/// the tuple is packed into disjoint bit fields and passed through a bijection.
inline std::uint64_t run_seed(std::uint64_t master, double itsg5_fraction,
                              TrafficMode mode, int run_index) {
  const auto mix_key =
      static_cast<std::uint64_t>(std::llround(itsg5_fraction * 10000.0));
  const std::uint64_t packed = (mix_key << 40) |
                               (static_cast<std::uint64_t>(mode) << 39) |
                               (static_cast<std::uint64_t>(run_index) & ((1ULL << 39) - 1));
  return mix64(mix64(master) ^ packed);
}

struct PointResult {
  double itsg5_fraction = 0.0;
  TrafficMode mode = TrafficMode::Standard;
  std::vector<RunLog> runs;
  PrrAggregate aggregate;
};

/// Runs every (mix, mode, run) simulation. Workers pull jobs from a shared
/// index; results land in grid order, not completion order.
inline std::vector<PointResult> simulate_grid(const ExperimentConfig& cfg,
                                              std::ostream* progress = nullptr) {
  struct Job {
    std::size_t point;
    int run;
  };
  std::vector<PointResult> points;
  std::vector<Job> jobs;
  for (TrafficMode mode : cfg.modes) {
    for (double mix : cfg.mix_fractions) {
      PointResult p;
      p.itsg5_fraction = mix;
      p.mode = mode;
      p.runs.resize(static_cast<std::size_t>(cfg.runs));
      points.push_back(std::move(p));
      for (int r = 0; r < cfg.runs; ++r) jobs.push_back({points.size() - 1, r});
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const Job job = jobs[j];
      PointResult& p = points[job.point];
      try {
        EngineConfig ec = cfg.engine;
        ec.traffic.mode = p.mode;
        RunLog log = Simulator(ec, p.itsg5_fraction,
                               run_seed(cfg.master_seed, p.itsg5_fraction, p.mode, job.run))
                         .run();
        p.runs[static_cast<std::size_t>(job.run)] = std::move(log);
        if (progress) {
          std::lock_guard lock(mu);
          *progress << "run " << to_string(p.mode) << " itsg5=" << p.itsg5_fraction
                    << " #" << job.run << " done\n";
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (PointResult& p : points) {
    std::vector<PrrHistogram> hs;
    hs.reserve(p.runs.size());
    for (const RunLog& r : p.runs) hs.push_back(r.histogram);
    p.aggregate = aggregate(hs);
  }
  return points;
}

inline void print_summary(std::ostream& os, const ExperimentConfig& cfg,
                          const std::vector<PointResult>& points) {
  os << "runs per point: " << cfg.runs << ", measured " << cfg.engine.measure_s
     << " s after " << cfg.engine.warm_up_s << " s warm-up\n";
  os << std::left << std::setw(12) << "mode" << std::setw(7) << "itsg5" << std::setw(8)
     << "tech" << std::right << std::setw(8) << "@50m" << std::setw(8) << "@100m"
     << std::setw(8) << "@200m" << std::setw(8) << "@300m" << std::setw(10) << "tx"
     << std::setw(10) << "replaced" << '\n';
  const double at[] = {50.0, 100.0, 200.0, 300.0};
  for (const PointResult& p : points) {
    for (const TechAggregate& ta : p.aggregate.techs) {
      std::int64_t tx = 0;
      std::int64_t replaced = 0;
      for (const RunLog& r : p.runs) {
        tx += r.counter(ta.tech).transmitted;
        replaced += r.counter(ta.tech).replaced;
      }
      os << std::left << std::setw(12) << to_string(p.mode) << std::setw(7)
         << std::llround(p.itsg5_fraction * 100.0) << std::setw(8) << to_string(ta.tech)
         << std::right << std::fixed << std::setprecision(3);
      for (double d : at) {
        const auto v = p.aggregate.prr_at(ta.tech, d);
        if (v) {
          os << std::setw(8) << *v;
        } else {
          os << std::setw(8) << "-";
        }
      }
      os << std::setw(10) << tx << std::setw(10) << replaced << '\n';
      os.unsetf(std::ios::fixed);
    }
  }
}

/// Full sweep: simulate, aggregate, write CSVs and the plot script, print the
/// summary. Returns a process exit code; on failure nothing is left behind.
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& out,
                          std::ostream& err) {
  if (auto errors = validate(cfg); !errors.empty()) {
    for (const auto& e : errors) err << "config error: " << e << '\n';
    return kExitConfig;
  }
  std::vector<PointResult> points;
  try {
    points = simulate_grid(cfg, cfg.verbose > 0 ? &err : nullptr);
  } catch (const std::exception& ex) {
    err << "simulation failed: " << ex.what() << '\n';
    return kExitRuntime;
  }

  std::vector<EmittedTable> tables;
  for (const PointResult& p : points) {
    tables.push_back({p.mode, p.itsg5_fraction, p.aggregate});
  }
  const std::filesystem::path dir(cfg.out_dir);
  const bool existed = std::filesystem::exists(dir);
  try {
    emit(tables, dir);
  } catch (const std::exception& ex) {
    err << "output failed: " << ex.what() << '\n';
    std::error_code ec;
    if (!existed) {
      std::filesystem::remove_all(dir, ec);
    } else {
      for (const auto& t : tables) {
        std::filesystem::remove(dir / prr_csv_name(t.mode, t.itsg5_fraction), ec);
      }
      std::filesystem::remove(dir / "plot_prr.gp", ec);
    }
    return kExitRuntime;
  }
  print_summary(out, cfg, points);
  out << "wrote " << tables.size() << " tables to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace coexsim
