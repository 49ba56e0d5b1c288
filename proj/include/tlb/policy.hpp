#ifndef TLB_POLICY_HPP
#define TLB_POLICY_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "tlb/linear_estimator.hpp"
#include "tlb/random.hpp"

namespace tlb {

enum class PolicyKind { LinearApt, Apt, Random, Ucbe };

/// A policy together with its configuration knob. `ucbe_exponent` is the `i`
/// in a = 4^i (T - K) / H and is only meaningful for UCBE.
struct PolicySpec {
  PolicyKind kind = PolicyKind::LinearApt;
  int ucbe_exponent = 0;

  std::string name() const {
    switch (kind) {
      case PolicyKind::LinearApt: return "linear_apt";
      case PolicyKind::Apt: return "apt";
      case PolicyKind::Random: return "random";
      case PolicyKind::Ucbe: return "ucbe(" + std::to_string(ucbe_exponent) + ")";
    }
    return "unknown";
  }

  /// Accepts "linear_apt", "apt", "random", "ucbe(i)" and "ucbe{i=i}".
  static PolicySpec parse(std::string_view text) {
    if (text == "linear_apt") return {PolicyKind::LinearApt, 0};
    if (text == "apt") return {PolicyKind::Apt, 0};
    if (text == "random") return {PolicyKind::Random, 0};
    if (text.starts_with("ucbe")) {
      std::string_view rest = text.substr(4);
      std::string_view digits;
      if (rest.size() >= 2 && rest.front() == '(' && rest.back() == ')') {
        digits = rest.substr(1, rest.size() - 2);
      } else if (rest.size() >= 4 && rest.substr(0, 3) == "{i=" && rest.back() == '}') {
        digits = rest.substr(3, rest.size() - 4);
      } else {
        throw std::invalid_argument(
            "'" + std::string(text) +
            "': ucbe needs its exponent i, written ucbe(i) or ucbe{i=i}; the usual choices "
            "are i in {-1, 0, 4} and any other integer is accepted");
      }
      int exponent = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), exponent);
      if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) {
        throw std::invalid_argument("'" + std::string(text) +
                                    "': ucbe exponent must be an integer such as -1, 0 or 4");
      }
      return {PolicyKind::Ucbe, exponent};
    }
    throw std::invalid_argument("unknown algorithm '" + std::string(text) +
                                "' (expected linear_apt, apt, random or ucbe(i))");
  }

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

/// UCBE exploration parameter a = 4^i (T - K) / H.
inline double ucbe_param(int exponent, long budget, long num_arms, double complexity) {
  if (budget <= num_arms) {
    throw std::invalid_argument("ucbe_param: budget " + std::to_string(budget) +
                                " must exceed arm count " + std::to_string(num_arms));
  }
  if (!std::isfinite(complexity) || !(complexity > 0.0)) {
    throw std::invalid_argument("ucbe_param: complexity H must be finite and positive");
  }
  return std::pow(4.0, exponent) * static_cast<double>(budget - num_arms) / complexity;
}

struct Classification {
  std::vector<Index> above;  // estimated mean >= threshold
  Vector estimated_means;
};

/// Lowest index wins ties.
inline Index argmin_lowest(const Eigen::Ref<const Vector>& scores) {
  Index best = 0;
  for (Index k = 1; k < scores.size(); ++k) {
    if (scores[k] < scores[best]) best = k;
  }
  return best;
}

/**
 * Mutable state of one fixed-budget episode for any of the four policies.
 *
 * Rounds [0, K) pull arm `round` for every kind. Afterwards:
 *   - LinearApt: argmin_k sqrt(T_k) * (|<theta_hat, x_k> - tau| + eps)
 *   - Apt:       same score with the empirical mean of arm k
 *   - Random:    uniform over the K arms
 *   - Ucbe:      argmin_k (|<theta_hat, x_k> - tau| + eps) - sqrt(a / T_k)
 * Every kind except Apt feeds all observations to a ridge estimator, which
 * also produces the final classification.
 */
class PolicyState {
 public:
  PolicyState(PolicyKind kind, Index num_arms, Index dim, long budget, double ucbe_a = 0.0,
              double ridge = 1.0)
      : kind_(kind), budget_(budget), ucbe_a_(ucbe_a),
        pull_counts_(num_arms > 0 ? num_arms : 0, 0),
        reward_sums_(num_arms > 0 ? num_arms : 0, 0.0) {
    if (num_arms < 1) throw std::invalid_argument("PolicyState: need at least one arm");
    if (budget < 0) throw std::invalid_argument("PolicyState: budget must be nonnegative");
    if (kind == PolicyKind::Ucbe && !(ucbe_a > 0.0 && std::isfinite(ucbe_a))) {
      throw std::invalid_argument("PolicyState: UCBE needs a positive finite parameter a");
    }
    if (kind != PolicyKind::Apt) estimator_.emplace(dim, ridge);
  }

  Index select_arm(const Matrix& arms, double threshold, double precision, Rng& rng) const {
    if (round_ >= budget_) {
      throw std::logic_error("select_arm: budget of " + std::to_string(budget_) +
                             " rounds is exhausted");
    }
    check_arms(arms);
    const Index k = num_arms();
    if (round_ < k) return static_cast<Index>(round_);

    switch (kind_) {
      case PolicyKind::Random:
        return std::uniform_int_distribution<Index>(0, k - 1)(rng);
      case PolicyKind::LinearApt:
      case PolicyKind::Apt: {
        const Vector gaps = estimated_gaps(arms, threshold, precision);
        Vector scores(k);
        for (Index i = 0; i < k; ++i) {
          scores[i] = std::sqrt(static_cast<double>(pull_counts_[i])) * gaps[i];
        }
        return argmin_lowest(scores);
      }
      case PolicyKind::Ucbe: {
        const Vector gaps = estimated_gaps(arms, threshold, precision);
        Vector scores(k);
        for (Index i = 0; i < k; ++i) {
          scores[i] = gaps[i] - std::sqrt(ucbe_a_ / static_cast<double>(pull_counts_[i]));
        }
        return argmin_lowest(scores);
      }
    }
    throw std::logic_error("select_arm: unknown policy kind");
  }

  void observe(Index arm, double reward, const Eigen::Ref<const Vector>& arm_vector) {
    if (arm < 0 || arm >= num_arms()) {
      throw std::invalid_argument("observe: arm index " + std::to_string(arm) + " out of range");
    }
    if (!std::isfinite(reward)) throw std::invalid_argument("observe: reward must be finite");
    if (estimator_) estimator_->update(arm_vector, reward);
    ++pull_counts_[static_cast<std::size_t>(arm)];
    reward_sums_[static_cast<std::size_t>(arm)] += reward;
    ++round_;
  }

  /// mu_hat for every arm: <theta_hat, x_i>, or the empirical mean for Apt
  /// (0 for arms never pulled).
  Vector estimated_means(const Matrix& arms) const {
    check_arms(arms);
    if (estimator_) return arms * estimator_->theta_hat();
    Vector means(num_arms());
    for (Index i = 0; i < num_arms(); ++i) {
      const auto n = pull_counts_[static_cast<std::size_t>(i)];
      means[i] = n > 0 ? reward_sums_[static_cast<std::size_t>(i)] / static_cast<double>(n) : 0.0;
    }
    return means;
  }

  Vector estimated_gaps(const Matrix& arms, double threshold, double precision) const {
    return ((estimated_means(arms).array() - threshold).abs() + precision).matrix();
  }

  Classification classify(const Matrix& arms, double threshold) const {
    Classification result;
    result.estimated_means = estimated_means(arms);
    for (Index i = 0; i < result.estimated_means.size(); ++i) {
      if (result.estimated_means[i] >= threshold) result.above.push_back(i);
    }
    return result;
  }

  PolicyKind kind() const noexcept { return kind_; }
  Index num_arms() const noexcept { return static_cast<Index>(pull_counts_.size()); }
  long budget() const noexcept { return budget_; }
  long round() const noexcept { return round_; }
  double ucbe_a() const noexcept { return ucbe_a_; }
  const std::vector<long>& pull_counts() const noexcept { return pull_counts_; }
  const std::vector<double>& reward_sums() const noexcept { return reward_sums_; }
  const std::optional<RidgeEstimator>& estimator() const noexcept { return estimator_; }

 private:
  void check_arms(const Matrix& arms) const {
    if (arms.rows() != num_arms()) {
      throw std::invalid_argument("policy built for " + std::to_string(num_arms()) +
                                  " arms was given " + std::to_string(arms.rows()));
    }
    if (estimator_ && arms.cols() != estimator_->dim()) {
      throw std::invalid_argument("policy built for dimension " +
                                  std::to_string(estimator_->dim()) + " was given " +
                                  std::to_string(arms.cols()));
    }
  }

  PolicyKind kind_;
  long budget_;
  double ucbe_a_;
  long round_ = 0;
  std::vector<long> pull_counts_;
  std::vector<double> reward_sums_;
  std::optional<RidgeEstimator> estimator_;
};

}  // namespace tlb

#endif  // TLB_POLICY_HPP
