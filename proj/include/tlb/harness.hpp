#ifndef TLB_HARNESS_HPP
#define TLB_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "tlb/environment.hpp"
#include "tlb/linear_estimator.hpp"
#include "tlb/policy.hpp"
#include "tlb/random.hpp"

namespace tlb {

/// 1 iff an arm with mu >= tau + eps is classified below tau, or an arm with
/// mu < tau - eps is classified above. Arms inside the band never count.
inline int compute_loss(const GroundTruth& truth, const Classification& cls) {
  const Index k = truth.means.size();
  if (cls.estimated_means.size() != k) {
    throw std::invalid_argument("compute_loss: classification covers " +
                                std::to_string(cls.estimated_means.size()) + " arms, truth " +
                                std::to_string(k));
  }
  std::vector<char> classified_above(static_cast<std::size_t>(k), 0);
  for (Index i : cls.above) {
    if (i < 0 || i >= k) throw std::invalid_argument("compute_loss: arm index out of range");
    classified_above[static_cast<std::size_t>(i)] = 1;
  }
  for (Index i : truth.above_set) {
    if (!classified_above[static_cast<std::size_t>(i)]) return 1;
  }
  for (Index i : truth.below_set) {
    if (classified_above[static_cast<std::size_t>(i)]) return 1;
  }
  return 0;
}

struct EpisodeResult {
  Classification classification;
  int loss = 0;
  std::vector<long> pull_counts;
  std::uint64_t seed = 0;
};

struct EpisodeOptions {
  double ridge = 1.0;
};

/// Runs `budget` select/sample/observe rounds and classifies once at the end.
/// The policy sees only arm vectors, tau, eps and rewards; UCBE additionally
/// receives a = 4^i (T - K) / H computed here from the instance.
inline EpisodeResult run_episode(const Instance& inst, const GroundTruth& truth,
                                 const PolicySpec& spec, long budget, Rng& rng,
                                 std::uint64_t seed_material = 0,
                                 const EpisodeOptions& opts = {}) {
  const Index k = inst.num_arms();
  if (budget < k) {
    throw std::invalid_argument("budget " + std::to_string(budget) + " < arm count " +
                                std::to_string(k) + ": every arm must be pulled once");
  }
  double ucbe_a = 0.0;
  if (spec.kind == PolicyKind::Ucbe) {
    if (!truth.complexity_finite) {
      throw std::invalid_argument(
          "UCBE needs a finite complexity H, but some arm sits exactly on the threshold "
          "with zero precision");
    }
    ucbe_a = ucbe_param(spec.ucbe_exponent, budget, static_cast<long>(k), truth.complexity);
  }

  PolicyState state(spec.kind, k, inst.dim(), budget, ucbe_a, opts.ridge);
  for (long t = 0; t < budget; ++t) {
    const Index arm = state.select_arm(inst.arms, inst.threshold, inst.precision, rng);
    const double reward = sample_reward(inst, arm, rng);
    state.observe(arm, reward, inst.arms.row(arm).transpose());
  }

  EpisodeResult result;
  result.classification = state.classify(inst.arms, inst.threshold);
  result.loss = compute_loss(truth, result.classification);
  result.pull_counts = state.pull_counts();
  result.seed = seed_material;
  return result;
}

inline EpisodeResult run_episode(const Instance& inst, const PolicySpec& spec, long budget,
                                 Rng& rng, std::uint64_t seed_material = 0,
                                 const EpisodeOptions& opts = {}) {
  return run_episode(inst, ground_truth(inst), spec, budget, rng, seed_material, opts);
}

// ---------------------------------------------------------------------------
// Loss bound

struct BoundValue {
  double value = 0.0;
  bool valid = false;
  /// Natural log of the bound; `value` is floored at the smallest positive
  /// double where exp(log_value) would underflow.
  double log_value = 0.0;
};

/// exp{ log(1 + T L^2) - (1/d) (sqrt(T / (16 H)) - |theta|)^2 }, the LinearAPT
/// expected-loss bound with gamma = 4. `valid` holds iff |theta| < sqrt(T / (16 H)).
inline BoundValue linear_apt_loss_bound(double complexity, long budget, long dim,
                                        double norm_bound, double theta_norm) {
  if (!(complexity > 0.0) || !std::isfinite(complexity) || budget <= 0 || dim <= 0 ||
      !(norm_bound > 0.0) || !std::isfinite(norm_bound) || !(theta_norm >= 0.0) ||
      !std::isfinite(theta_norm)) {
    throw std::invalid_argument(
        "linear_apt_loss_bound: H, T, d and L must be positive and |theta| nonnegative");
  }
  constexpr double kGamma = 4.0;
  const double t = static_cast<double>(budget);
  const double radius = std::sqrt(t / (kGamma * kGamma * complexity));
  const double shortfall = radius - theta_norm;
  const double exponent =
      std::log1p(t * norm_bound * norm_bound) - shortfall * shortfall / static_cast<double>(dim);
  const double value = std::max(std::exp(exponent), std::numeric_limits<double>::denorm_min());
  return {value, theta_norm < radius, exponent};
}

inline BoundValue linear_apt_loss_bound(const Instance& inst, const GroundTruth& truth,
                                        long budget) {
  return linear_apt_loss_bound(truth.complexity, budget, static_cast<long>(inst.dim()),
                               inst.norm_bound, inst.theta.norm());
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct SyntheticSpec {
  Index dim = 5;
  Index num_arms = 20;
  double threshold = 0.0;
  double precision = 0.01;
};

/// Feature rows as arms; theta and the threshold are drawn per instance.
struct DatasetSpec {
  Matrix features;
  double precision = 0.1;
};

/// A fully specified instance, reused as is.
struct FixedSpec {
  Instance instance;
};

using InstanceSpec = std::variant<SyntheticSpec, DatasetSpec, FixedSpec>;

inline Instance draw_instance(const InstanceSpec& spec, Rng& rng) {
  struct Visitor {
    Rng& rng;
    Instance operator()(const SyntheticSpec& s) const {
      return make_synthetic_instance(s.dim, s.num_arms, s.threshold, s.precision, rng);
    }
    Instance operator()(const DatasetSpec& s) const {
      return make_regression_instance(s.features, s.precision, rng);
    }
    Instance operator()(const FixedSpec& s) const { return s.instance; }
  };
  return std::visit(Visitor{rng}, spec);
}

inline Index arm_count(const InstanceSpec& spec) {
  struct Visitor {
    Index operator()(const SyntheticSpec& s) const { return s.num_arms; }
    Index operator()(const DatasetSpec& s) const { return s.features.rows(); }
    Index operator()(const FixedSpec& s) const { return s.instance.num_arms(); }
  };
  return std::visit(Visitor{}, spec);
}

enum class ResampleMode { FreshInstance, FixedInstance };

inline std::string to_string(ResampleMode mode) {
  return mode == ResampleMode::FreshInstance ? "fresh-instance" : "fixed-instance";
}

/// Stream index reserved for the shared instance in fixed-instance mode;
/// replication streams use indices [0, N).
inline constexpr std::uint64_t kFixedInstanceStream = ~std::uint64_t{0};

inline Instance fixed_instance(const InstanceSpec& spec, std::uint64_t master_seed) {
  Rng rng = make_stream(master_seed, kFixedInstanceStream);
  return draw_instance(spec, rng);
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

struct MonteCarloConfig {
  InstanceSpec instance = SyntheticSpec{};
  PolicySpec policy;
  long budget = 0;
  long replications = 1;
  std::uint64_t master_seed = 0;
  ResampleMode mode = ResampleMode::FreshInstance;
  unsigned threads = 1;  // 0 = hardware concurrency
  double ridge = 1.0;
  bool keep_episodes = false;
};

struct ExpectedLossEstimate {
  double mean_loss = 0.0;
  double stderr_loss = 0.0;  // sqrt(p (1 - p) / N)
  long replications = 0;
  long failures = 0;
  /// Fixed-instance mode only.
  std::optional<BoundValue> bound;
  std::optional<double> complexity;
  /// Filled when keep_episodes is set, in replication order.
  std::vector<EpisodeResult> episodes;
};

class ReplicationError : public std::runtime_error {
 public:
  ReplicationError(long replication, const std::string& what)
      : std::runtime_error("replication " + std::to_string(replication) + ": " + what),
        replication_(replication) {}
  long replication() const noexcept { return replication_; }

 private:
  long replication_;
};

/// Bernoulli mean and plug-in standard error of `failures` out of `n`.
inline std::pair<double, double> bernoulli_estimate(long failures, long n) {
  const double p = static_cast<double>(failures) / static_cast<double>(n);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

/**
 * Estimates E[loss] by N independent episodes. Replication `r` draws all of
 * its randomness (instance in fresh mode, rewards, random arm choices) from
 * make_stream(master_seed, r), so the result is independent of the thread
 * count. In fixed mode the single instance comes from the reserved stream
 * kFixedInstanceStream.
 */
inline ExpectedLossEstimate monte_carlo(const MonteCarloConfig& cfg) {
  if (cfg.replications < 1) {
    throw std::invalid_argument("monte_carlo: replications must be >= 1");
  }
  std::optional<Instance> shared;
  std::optional<GroundTruth> shared_truth;
  if (cfg.mode == ResampleMode::FixedInstance) {
    shared = fixed_instance(cfg.instance, cfg.master_seed);
    shared_truth = ground_truth(*shared);
  }

  const auto n = static_cast<std::size_t>(cfg.replications);
  std::vector<EpisodeResult> episodes(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};

  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t r = next.fetch_add(1, std::memory_order_relaxed);
      if (r >= n) return;
      try {
        const std::uint64_t seed = derive_seed(cfg.master_seed, r);
        Rng rng(seed);
        EpisodeOptions opts{cfg.ridge};
        if (shared) {
          episodes[r] = run_episode(*shared, *shared_truth, cfg.policy, cfg.budget, rng, seed, opts);
        } else {
          const Instance inst = draw_instance(cfg.instance, rng);
          episodes[r] = run_episode(inst, cfg.policy, cfg.budget, rng, seed, opts);
        }
      } catch (...) {
        errors[r] = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
      }
    }
  };

  const unsigned threads =
      std::min<unsigned>(resolve_threads(cfg.threads), static_cast<unsigned>(std::min<std::size_t>(n, 1024)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  for (std::size_t r = 0; r < n; ++r) {
    if (!errors[r]) continue;
    try {
      std::rethrow_exception(errors[r]);
    } catch (const std::exception& e) {
      throw ReplicationError(static_cast<long>(r), e.what());
    }
  }

  ExpectedLossEstimate est;
  est.replications = cfg.replications;
  for (const auto& ep : episodes) est.failures += ep.loss;
  std::tie(est.mean_loss, est.stderr_loss) = bernoulli_estimate(est.failures, cfg.replications);
  if (shared) {
    est.complexity = shared_truth->complexity;
    if (shared_truth->complexity_finite && shared->norm_bound > 0.0) {
      est.bound = linear_apt_loss_bound(*shared, *shared_truth, cfg.budget);
    }
  }
  if (cfg.keep_episodes) est.episodes = std::move(episodes);
  return est;
}

}  // namespace tlb

#endif  // TLB_HARNESS_HPP
