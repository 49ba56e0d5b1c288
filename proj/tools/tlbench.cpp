// tlbench: run thresholding-bandit experiment grids from a config file.
//
//   tlbench run <config> [--threads N] [--dry-run] [--keep-going] [--trace-dir DIR] [--timing]
//
// Exit codes: 0 success, 1 config error, 2 runtime error.
// TLB_THREADS sets the default worker count; --threads overrides it.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tlb/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

unsigned default_threads() {
  if (const char* env = std::getenv("TLB_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring invalid TLB_THREADS='" << env << "'\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed-budget thresholding linear bandit experiments"};
  app.require_subcommand(1);

  std::string config_path;
  unsigned threads = default_threads();
  bool dry_run = false;
  bool keep_going = false;
  bool timing = false;
  std::string trace_dir;

  CLI::App* run = app.add_subcommand("run", "Run the algorithm x budget grid described by a config file");
  run->add_option("config", config_path, "Experiment config (YAML)")->required();
  run->add_option("--threads", threads, "Worker threads per cell (0 = all cores; default $TLB_THREADS)");
  run->add_flag("--dry-run", dry_run, "Validate and echo the resolved config without running");
  run->add_flag("--keep-going", keep_going, "Skip failing cells instead of aborting");
  run->add_option("--trace-dir", trace_dir, "Write per-episode JSON traces into this directory");
  run->add_flag("--timing", timing, "Fill the wall_time_ms column (makes output run-dependent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  tlb::ExperimentConfig cfg;
  try {
    cfg = tlb::validate_config(config_path);
  } catch (const tlb::ConfigError& e) {
    for (const auto& msg : e.errors()) std::cerr << "config error: " << msg << '\n';
    return kExitConfig;
  }

  if (dry_run) {
    std::cout << tlb::describe(cfg);
    return kExitOk;
  }

  try {
    tlb::RunOptions opts;
    opts.threads = threads;
    opts.keep_going = keep_going;
    opts.timing = timing;
    if (!trace_dir.empty()) opts.trace_dir = trace_dir;
    const tlb::ExperimentResult result = tlb::run_experiment(cfg, opts);
    tlb::write_results_csv(cfg.output, cfg, result.records);
    for (const auto& err : result.failed_cells) std::cerr << "skipped " << err.what() << '\n';
    std::cerr << "wrote " << result.records.size() << " rows to " << cfg.output.string() << '\n';
    return result.failed_cells.empty() ? kExitOk : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
