#ifndef TLB_EXPERIMENT_HPP
#define TLB_EXPERIMENT_HPP

// Declarative experiment grids: YAML config in, CSV result table out.
//
// Config grammar (YAML, unknown keys are rejected):
//
//   instance:
//     kind: synthetic        # synthetic | dataset | snapshot
//     dim: 5                 # synthetic
//     arms: 20               # synthetic
//     threshold: 0.0         # synthetic
//     precision: 0.01        # synthetic, dataset
//     path: ../data/iris.csv # dataset (feature CSV) or snapshot (instance JSON)
//     skip_header: false     # dataset, optional
//     minmax_scale: false    # dataset, optional
//   algorithms: [linear_apt, apt, random, ucbe(-1), ucbe(0), ucbe(4)]
//   budgets: [40, 80, 120, 160, 200]
//   replications: 10000
//   master_seed: 1
//   resample_mode: fresh-instance   # or fixed-instance
//   ridge: 1.0                      # optional
//   output: results/synthetic_d5.csv
//
// Relative paths are resolved against the directory holding the config file.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "tlb/environment.hpp"
#include "tlb/harness.hpp"
#include "tlb/policy.hpp"

namespace tlb {

struct ExperimentConfig {
  InstanceSpec instance = SyntheticSpec{};
  std::string instance_description;
  std::vector<PolicySpec> algorithms;
  std::vector<long> budgets;
  long replications = 1;
  std::uint64_t master_seed = 0;
  ResampleMode mode = ResampleMode::FreshInstance;
  double ridge = 1.0;
  std::filesystem::path output;
};

/// Every problem found in a config file, in file order.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string out;
    for (const auto& e : errors) {
      if (!out.empty()) out += '\n';
      out += e;
    }
    return out;
  }
  std::vector<std::string> errors_;
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::string source) : source_(std::move(source)) {}

  void error(const YAML::Node& node, const std::string& message) {
    const YAML::Mark mark = node.Mark();
    if (mark.is_null()) {
      errors_.push_back(source_ + ": " + message);
    } else {
      errors_.push_back(source_ + ":" + std::to_string(mark.line + 1) + ": " + message);
    }
  }

  template <typename T>
  std::optional<T> scalar(const YAML::Node& parent, const std::string& key, bool required = true) {
    const YAML::Node node = parent[key];
    if (!node) {
      if (required) error(parent, "missing required key '" + key + "'");
      return std::nullopt;
    }
    try {
      if (!node.IsScalar()) throw YAML::Exception(node.Mark(), "not a scalar");
      return node.as<T>();
    } catch (const YAML::Exception&) {
      error(node, "key '" + key + "' has an invalid value");
      return std::nullopt;
    }
  }

  void reject_unknown(const YAML::Node& map, std::initializer_list<const char*> known) {
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
        error(kv.first, "unknown key '" + key + "'");
      }
    }
  }

  std::vector<std::string>& errors() { return errors_; }

 private:
  std::string source_;
  std::vector<std::string> errors_;
};

inline std::filesystem::path resolve(const std::filesystem::path& base,
                                     const std::filesystem::path& p) {
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

}  // namespace detail

/// Parses and checks a config document. `base_dir` anchors relative paths.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source,
                                     const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError({source + ":" + std::to_string(e.mark.line + 1) + ": parse error: " + e.msg});
  }
  detail::ConfigReader reader(source);
  if (!root.IsMap()) throw ConfigError({source + ": top level must be a mapping"});
  reader.reject_unknown(root, {"instance", "algorithms", "budgets", "replications", "master_seed",
                               "resample_mode", "ridge", "output"});

  ExperimentConfig cfg;
  std::optional<Index> arm_count_value;

  const YAML::Node inst = root["instance"];
  if (!inst || !inst.IsMap()) {
    reader.error(root, "missing required table 'instance'");
  } else {
    const auto kind = reader.scalar<std::string>(inst, "kind");
    if (kind == "synthetic") {
      reader.reject_unknown(inst, {"kind", "dim", "arms", "threshold", "precision"});
      const auto dim = reader.scalar<long>(inst, "dim");
      const auto arms = reader.scalar<long>(inst, "arms");
      const auto tau = reader.scalar<double>(inst, "threshold");
      const auto eps = reader.scalar<double>(inst, "precision");
      if (dim && *dim < 1) reader.error(inst["dim"], "dim must be >= 1");
      if (arms && *arms < 1) reader.error(inst["arms"], "arms must be >= 1");
      if (eps && !(*eps >= 0.0)) reader.error(inst["precision"], "precision must be >= 0");
      if (dim && arms && tau && eps && *dim >= 1 && *arms >= 1 && *eps >= 0.0) {
        cfg.instance = SyntheticSpec{*dim, *arms, *tau, *eps};
        arm_count_value = *arms;
        std::ostringstream desc;
        desc << "synthetic(d=" << *dim << ",K=" << *arms << ",tau=" << format_double(*tau)
             << ",eps=" << format_double(*eps) << ")";
        cfg.instance_description = desc.str();
      }
    } else if (kind == "dataset") {
      reader.reject_unknown(inst, {"kind", "path", "precision", "skip_header", "minmax_scale"});
      const auto path = reader.scalar<std::string>(inst, "path");
      const auto eps = reader.scalar<double>(inst, "precision");
      FeatureTableOptions opts;
      opts.skip_header = reader.scalar<bool>(inst, "skip_header", false).value_or(false);
      opts.minmax_scale = reader.scalar<bool>(inst, "minmax_scale", false).value_or(false);
      if (eps && !(*eps >= 0.0)) reader.error(inst["precision"], "precision must be >= 0");
      if (path) {
        const auto full = detail::resolve(base_dir, *path);
        if (!std::filesystem::exists(full)) {
          reader.error(inst["path"], "dataset file '" + full.string() + "' does not exist");
        } else {
          try {
            Matrix features = load_feature_table(full, opts);
            arm_count_value = features.rows();
            if (eps && *eps >= 0.0) {
              cfg.instance = DatasetSpec{std::move(features), *eps};
              cfg.instance_description = "dataset(path=" + *path + ",eps=" + format_double(*eps) +
                                         (opts.minmax_scale ? ",minmax" : "") + ")";
            }
          } catch (const ParseError& e) {
            reader.error(inst["path"], e.what());
          }
        }
      }
    } else if (kind == "snapshot") {
      reader.reject_unknown(inst, {"kind", "path"});
      const auto path = reader.scalar<std::string>(inst, "path");
      if (path) {
        const auto full = detail::resolve(base_dir, *path);
        std::ifstream in(full);
        if (!in) {
          reader.error(inst["path"], "snapshot file '" + full.string() + "' does not exist");
        } else {
          try {
            Instance snap = from_snapshot(nlohmann::json::parse(in));
            arm_count_value = snap.num_arms();
            cfg.instance = FixedSpec{std::move(snap)};
            cfg.instance_description = "snapshot(path=" + *path + ")";
          } catch (const std::exception& e) {
            reader.error(inst["path"], std::string("invalid snapshot: ") + e.what());
          }
        }
      }
    } else if (kind) {
      reader.error(inst["kind"], "unknown instance kind '" + *kind +
                                     "' (expected synthetic, dataset or snapshot)");
    }
  }

  const YAML::Node algos = root["algorithms"];
  if (!algos || !algos.IsSequence() || algos.size() == 0) {
    reader.error(algos ? algos : root, "'algorithms' must be a non-empty list");
  } else {
    for (const auto& a : algos) {
      try {
        const PolicySpec spec = PolicySpec::parse(a.as<std::string>());
        if (std::find(cfg.algorithms.begin(), cfg.algorithms.end(), spec) != cfg.algorithms.end()) {
          reader.error(a, "algorithm '" + spec.name() + "' listed twice");
        } else {
          cfg.algorithms.push_back(spec);
        }
      } catch (const std::exception& e) {
        reader.error(a, e.what());
      }
    }
  }

  const YAML::Node budgets = root["budgets"];
  if (!budgets || !budgets.IsSequence() || budgets.size() == 0) {
    reader.error(budgets ? budgets : root, "'budgets' must be a non-empty list");
  } else {
    for (const auto& b : budgets) {
      long t = 0;
      try {
        t = b.as<long>();
      } catch (const YAML::Exception&) {
        reader.error(b, "budget '" + b.as<std::string>("?") + "' is not an integer");
        continue;
      }
      if (std::find(cfg.budgets.begin(), cfg.budgets.end(), t) != cfg.budgets.end()) {
        reader.error(b, "budget " + std::to_string(t) + " listed twice");
        continue;
      }
      if (t < 1) {
        reader.error(b, "budget " + std::to_string(t) + " must be positive");
      } else if (arm_count_value && t < *arm_count_value) {
        reader.error(b, "budget " + std::to_string(t) + " < arm count " +
                            std::to_string(*arm_count_value));
      } else if (arm_count_value && t == *arm_count_value &&
                 std::any_of(cfg.algorithms.begin(), cfg.algorithms.end(),
                             [](const PolicySpec& s) { return s.kind == PolicyKind::Ucbe; })) {
        reader.error(b, "budget " + std::to_string(t) +
                            " equals the arm count; ucbe needs a budget above it");
      }
      cfg.budgets.push_back(t);
    }
  }

  if (const auto n = reader.scalar<long>(root, "replications")) {
    if (*n < 1) reader.error(root["replications"], "replications must be >= 1, got " + std::to_string(*n));
    cfg.replications = *n;
  }
  if (const auto seed = reader.scalar<std::uint64_t>(root, "master_seed")) cfg.master_seed = *seed;
  if (const auto mode = reader.scalar<std::string>(root, "resample_mode")) {
    if (*mode == "fresh-instance") {
      cfg.mode = ResampleMode::FreshInstance;
    } else if (*mode == "fixed-instance") {
      cfg.mode = ResampleMode::FixedInstance;
    } else {
      reader.error(root["resample_mode"], "resample_mode must be fresh-instance or fixed-instance");
    }
  }
  if (const auto ridge = reader.scalar<double>(root, "ridge", false)) {
    if (!(*ridge > 0.0)) reader.error(root["ridge"], "ridge must be positive");
    cfg.ridge = *ridge;
  }
  if (const auto out = reader.scalar<std::string>(root, "output")) {
    cfg.output = detail::resolve(base_dir, *out);
  }

  if (!reader.errors().empty()) throw ConfigError(std::move(reader.errors()));
  return cfg;
}

inline ExperimentConfig validate_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path.string() + "'"});
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.string(), path.parent_path());
}

/// YAML-ish echo of a resolved config, used by --dry-run.
inline std::string describe(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "instance: " << cfg.instance_description << '\n';
  out << "arm_count: " << arm_count(cfg.instance) << '\n';
  out << "algorithms: [";
  for (std::size_t i = 0; i < cfg.algorithms.size(); ++i) {
    out << (i ? ", " : "") << cfg.algorithms[i].name();
  }
  out << "]\nbudgets: [";
  for (std::size_t i = 0; i < cfg.budgets.size(); ++i) out << (i ? ", " : "") << cfg.budgets[i];
  out << "]\nreplications: " << cfg.replications << '\n'
      << "master_seed: " << cfg.master_seed << '\n'
      << "resample_mode: " << to_string(cfg.mode) << '\n'
      << "ridge: " << format_double(cfg.ridge) << '\n'
      << "output: " << cfg.output.string() << '\n'
      << "cells: " << cfg.algorithms.size() * cfg.budgets.size() << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Running

struct ResultRecord {
  std::string algorithm;
  long budget = 0;
  long replications = 0;
  long failures = 0;
  double mean_loss = 0.0;
  double stderr_loss = 0.0;
  std::optional<BoundValue> bound;
  std::optional<double> complexity;
  std::uint64_t seed = 0;
  ResampleMode mode = ResampleMode::FreshInstance;
  std::optional<double> wall_time_ms;

  /// Empty when no replication failed.
  std::optional<double> log10_mean_loss() const {
    if (mean_loss > 0.0) return std::log10(mean_loss);
    return std::nullopt;
  }
};

struct RunOptions {
  unsigned threads = 0;  // 0 = hardware concurrency
  bool keep_going = false;
  bool timing = false;
  std::optional<std::filesystem::path> trace_dir;
};

class CellError : public std::runtime_error {
 public:
  CellError(const std::string& algorithm, long budget, const std::string& what)
      : std::runtime_error("cell (" + algorithm + ", T=" + std::to_string(budget) + "): " + what),
        algorithm_(algorithm), budget_(budget) {}
  const std::string& algorithm() const noexcept { return algorithm_; }
  long budget() const noexcept { return budget_; }

 private:
  std::string algorithm_;
  long budget_;
};

struct ExperimentResult {
  std::vector<ResultRecord> records;  // sorted by (algorithm, T)
  std::vector<CellError> failed_cells;
};

inline std::string trace_file_name(const std::string& algorithm, long budget) {
  std::string name;
  for (char c : algorithm) {
    if (c == '(') {
      name += '_';
    } else if (c != ')') {
      name += c;
    }
  }
  return name + "_T" + std::to_string(budget) + ".jsonl";
}

inline void write_trace(const std::filesystem::path& file, const ExpectedLossEstimate& est) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write trace file '" + file.string() + "'");
  for (std::size_t r = 0; r < est.episodes.size(); ++r) {
    const EpisodeResult& ep = est.episodes[r];
    nlohmann::json line = {{"replication", r},
                           {"seed", ep.seed},
                           {"loss", ep.loss},
                           {"pull_counts", ep.pull_counts},
                           {"above", ep.classification.above}};
    std::vector<double> means(ep.classification.estimated_means.data(),
                              ep.classification.estimated_means.data() +
                                  ep.classification.estimated_means.size());
    line["estimated_means"] = means;
    out << line.dump() << '\n';
  }
}

/// Runs every (algorithm, budget) cell in sequence. Without keep_going the
/// first failing cell is rethrown as a CellError.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  if (opts.trace_dir) {
    std::filesystem::create_directories(*opts.trace_dir);
    if (cfg.mode == ResampleMode::FixedInstance) {
      std::ofstream snap(*opts.trace_dir / "instance.json");
      snap << to_snapshot(fixed_instance(cfg.instance, cfg.master_seed), cfg.master_seed).dump(2)
           << '\n';
    }
  }

  std::vector<PolicySpec> algorithms = cfg.algorithms;
  std::sort(algorithms.begin(), algorithms.end(),
            [](const PolicySpec& a, const PolicySpec& b) { return a.name() < b.name(); });
  std::vector<long> budgets = cfg.budgets;
  std::sort(budgets.begin(), budgets.end());

  ExperimentResult result;
  for (const PolicySpec& policy : algorithms) {
    for (long budget : budgets) {
      MonteCarloConfig mc;
      mc.instance = cfg.instance;
      mc.policy = policy;
      mc.budget = budget;
      mc.replications = cfg.replications;
      mc.master_seed = cfg.master_seed;
      mc.mode = cfg.mode;
      mc.threads = opts.threads;
      mc.ridge = cfg.ridge;
      mc.keep_episodes = opts.trace_dir.has_value();

      const auto start = std::chrono::steady_clock::now();
      ExpectedLossEstimate est;
      try {
        est = monte_carlo(mc);
      } catch (const std::exception& e) {
        CellError err(policy.name(), budget, e.what());
        if (!opts.keep_going) throw err;
        result.failed_cells.push_back(err);
        continue;
      }
      const auto elapsed = std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - start);

      ResultRecord rec;
      rec.algorithm = policy.name();
      rec.budget = budget;
      rec.replications = est.replications;
      rec.failures = est.failures;
      rec.mean_loss = est.mean_loss;
      rec.stderr_loss = est.stderr_loss;
      rec.bound = est.bound;
      rec.complexity = est.complexity;
      rec.seed = cfg.master_seed;
      rec.mode = cfg.mode;
      if (opts.timing) rec.wall_time_ms = std::round(elapsed.count() * 1000.0) / 1000.0;
      if (opts.trace_dir) write_trace(*opts.trace_dir / trace_file_name(rec.algorithm, budget), est);
      result.records.push_back(std::move(rec));
    }
  }
  return result;
}

inline constexpr const char* kResultColumns =
    "algorithm,T,N,mean_loss,stderr,log10_mean_loss,bound,bound_valid,H,seed,resample_mode,"
    "wall_time_ms";

/// Writes the result table. Line 1 is a '#' comment with run metadata and the
/// column list; line 2 is the CSV header. Optional fields are left empty.
inline void write_results_csv(std::ostream& out, const ExperimentConfig& cfg,
                              const std::vector<ResultRecord>& records) {
  out << "# tlbench results; instance=" << cfg.instance_description
      << "; resample_mode=" << to_string(cfg.mode) << "; master_seed=" << cfg.master_seed
      << "; replications=" << cfg.replications << "; columns=" << kResultColumns << '\n';
  out << kResultColumns << '\n';
  for (const ResultRecord& r : records) {
    out << r.algorithm << ',' << r.budget << ',' << r.replications << ','
        << format_double(r.mean_loss) << ',' << format_double(r.stderr_loss) << ',';
    if (const auto lg = r.log10_mean_loss()) out << format_double(*lg);
    out << ',';
    if (r.bound) out << format_double(r.bound->value);
    out << ',';
    if (r.bound) out << (r.bound->valid ? "true" : "false");
    out << ',';
    if (r.complexity) out << format_double(*r.complexity);
    out << ',' << r.seed << ',' << to_string(r.mode) << ',';
    if (r.wall_time_ms) out << format_double(*r.wall_time_ms);
    out << '\n';
  }
}

inline void write_results_csv(const std::filesystem::path& path, const ExperimentConfig& cfg,
                              const std::vector<ResultRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write results to '" + path.string() + "'");
  write_results_csv(out, cfg, records);
}

}  // namespace tlb

#endif  // TLB_EXPERIMENT_HPP
