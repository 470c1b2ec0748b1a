// Command-line entry point: runs a technology-mix sweep and writes PRR tables.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "coexsim/config.hpp"
#include "coexsim/harness.hpp"

int main(int argc, char** argv) {
  using namespace coexsim;

  CLI::App app{"ITS-G5 / LTE-V2X co-channel coexistence simulator"};
  std::string config_path;
  std::vector<double> mixes;
  std::vector<std::string> modes;
  int runs = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  int jobs = 0;
  app.add_option("--config", config_path, "Key-value configuration file")
      ->check(CLI::ExistingFile);
  app.add_option("--mix", mixes, "ITS-G5 fraction(s) in [0,1]; repeatable");
  app.add_option("--mode", modes, "standard and/or constrained; repeatable");
  app.add_option("--runs", runs, "Runs per (mix, mode)");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--jobs", jobs, "Concurrent runs");
  auto* verbose = app.add_flag("-v,--verbose", "Progress on stderr; twice for an event trace");
  bool print_config = false;
  app.add_flag("--print-defaults", print_config, "Print the default sweep grid and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    if (!mixes.empty()) cfg.mix_fractions = mixes;
    if (!modes.empty()) {
      cfg.modes.clear();
      for (const auto& m : modes) cfg.modes.push_back(parse_mode(m));
    }
    if (app.count("--runs")) cfg.runs = runs;
    if (app.count("--seed")) cfg.master_seed = seed;
    if (app.count("--out")) cfg.out_dir = out_dir;
    if (app.count("--jobs")) cfg.jobs = jobs;
    cfg.verbose = static_cast<int>(verbose->count());
    check(cfg);
  } catch (const ConfigError& e) {
    for (const auto& msg : e.errors()) std::cerr << "config error: " << msg << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  if (print_config) {
    std::cout << "mixes:";
    for (double m : cfg.mix_fractions) std::cout << ' ' << m;
    std::cout << "\nmodes:";
    for (auto m : cfg.modes) std::cout << ' ' << to_string(m);
    std::cout << "\nruns: " << cfg.runs << "\nseed: " << cfg.master_seed
              << "\nout: " << cfg.out_dir << '\n';
    return kExitOk;
  }

  if (cfg.verbose >= 2) {
    cfg.jobs = 1;
    cfg.engine.event_log = &std::cerr;
  }
  return run_experiment(cfg, std::cout, std::cerr);
}
