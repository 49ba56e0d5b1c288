#ifndef TLB_LINEAR_ESTIMATOR_HPP
#define TLB_LINEAR_ESTIMATOR_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace tlb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/**
 * Online ridge regression with a rank-one maintained inverse.
 *
 * After absorbing observations (x_1, r_1), ..., (x_t, r_t) the state holds
 *
 * ```
 * gram      = ridge * I + sum_s x_s x_s^T
 * moment    = sum_s r_s x_s
 * theta_hat = gram^{-1} moment
 * ```
 *
 * which is the minimizer of sum_s (r_s - <theta, x_s>)^2 + ridge |theta|^2.
 * The inverse is updated with the Sherman-Morrison identity in O(d^2). After
 * every update the residual max|gram * gram_inv - I| is checked against the
 * drift tolerance; when it is exceeded the inverse is rebuilt from `gram` by
 * an LDL^T factorization and `drift_recoveries()` is incremented.
 */
class RidgeEstimator {
 public:
  static constexpr double kDefaultDriftTolerance = 1e-6;

  RidgeEstimator(Index dim, double ridge = 1.0,
                 double drift_tolerance = kDefaultDriftTolerance)
      : ridge_(ridge), drift_tolerance_(drift_tolerance) {
    if (dim < 1) {
      throw std::invalid_argument("RidgeEstimator: dimension must be >= 1, got " +
                                  std::to_string(dim));
    }
    if (!(ridge > 0.0) || !std::isfinite(ridge)) {
      throw std::invalid_argument("RidgeEstimator: ridge must be a positive finite number");
    }
    if (!(drift_tolerance > 0.0)) {
      throw std::invalid_argument("RidgeEstimator: drift tolerance must be positive");
    }
    gram_ = ridge * Matrix::Identity(dim, dim);
    gram_inv_ = (1.0 / ridge) * Matrix::Identity(dim, dim);
    moment_ = Vector::Zero(dim);
    theta_hat_ = Vector::Zero(dim);
  }

  /// Absorbs one (arm vector, reward) observation.
  void update(const Eigen::Ref<const Vector>& x, double reward) {
    check_dim(x, "update");
    if (!std::isfinite(reward)) {
      throw std::invalid_argument("RidgeEstimator::update: reward must be finite");
    }
    if (!x.allFinite()) {
      throw std::invalid_argument("RidgeEstimator::update: arm vector must be finite");
    }

    gram_.noalias() += x * x.transpose();
    moment_.noalias() += reward * x;

    // gram_inv is symmetric, so gram_inv * x serves as both u and v^T.
    const Vector u = gram_inv_ * x;
    const double denom = 1.0 + x.dot(u);  // >= 1 for positive definite gram
    gram_inv_.noalias() -= (u * u.transpose()) / denom;
    ++num_updates_;

    last_drift_ = inverse_residual();
    if (!(last_drift_ <= drift_tolerance_)) {
      refactor();
      ++drift_recoveries_;
    }
    theta_hat_.noalias() = gram_inv_ * moment_;
  }

  /// Estimated mean reward <theta_hat, x>.
  double predict_mean(const Eigen::Ref<const Vector>& x) const {
    check_dim(x, "predict_mean");
    return theta_hat_.dot(x);
  }

  /// Weighted norm sqrt(x^T gram^{-1} x).
  double vinv_norm(const Eigen::Ref<const Vector>& x) const {
    check_dim(x, "vinv_norm");
    const double q = x.dot(gram_inv_ * x);
    return std::sqrt(std::max(q, 0.0));
  }

  /// max|gram * gram_inv - I|.
  double inverse_residual() const {
    const Index d = dim();
    return (gram_ * gram_inv_ - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  }

  Index dim() const noexcept { return gram_.rows(); }
  double ridge() const noexcept { return ridge_; }
  double drift_tolerance() const noexcept { return drift_tolerance_; }
  const Matrix& gram() const noexcept { return gram_; }
  const Matrix& gram_inv() const noexcept { return gram_inv_; }
  const Vector& moment() const noexcept { return moment_; }
  const Vector& theta_hat() const noexcept { return theta_hat_; }
  std::uint64_t num_updates() const noexcept { return num_updates_; }
  std::uint64_t drift_recoveries() const noexcept { return drift_recoveries_; }
  double last_drift() const noexcept { return last_drift_; }

 private:
  void check_dim(const Eigen::Ref<const Vector>& x, const char* where) const {
    if (x.size() != dim()) {
      throw std::invalid_argument(std::string("RidgeEstimator::") + where +
                                  ": expected dimension " + std::to_string(dim()) +
                                  ", got " + std::to_string(x.size()));
    }
  }

  void refactor() {
    const Index d = dim();
    gram_inv_ = gram_.ldlt().solve(Matrix::Identity(d, d));
    gram_inv_ = 0.5 * (gram_inv_ + gram_inv_.transpose()).eval();
  }

  double ridge_;
  double drift_tolerance_;
  Matrix gram_;
  Matrix gram_inv_;
  Vector moment_;
  Vector theta_hat_;
  std::uint64_t num_updates_ = 0;
  std::uint64_t drift_recoveries_ = 0;
  double last_drift_ = 0.0;
};

struct Observation {
  Vector x;
  double reward = 0.0;
};

/// Ridge solution for a whole history at once, by a dense symmetric solve of
/// (ridge * I + sum x x^T) theta = sum r x. An empty history gives zero; the
/// dimension of an empty history is taken from `dim`.
inline Vector solve_direct(std::span<const Observation> history, double ridge,
                           Index dim = -1) {
  if (!(ridge > 0.0) || !std::isfinite(ridge)) {
    throw std::invalid_argument("solve_direct: ridge must be a positive finite number");
  }
  if (history.empty()) {
    return Vector::Zero(std::max<Index>(dim, 0));
  }
  const Index d = history.front().x.size();
  if (dim >= 0 && dim != d) {
    throw std::invalid_argument("solve_direct: history dimension " + std::to_string(d) +
                                " does not match requested " + std::to_string(dim));
  }
  Matrix gram = ridge * Matrix::Identity(d, d);
  Vector moment = Vector::Zero(d);
  for (std::size_t s = 0; s < history.size(); ++s) {
    const auto& obs = history[s];
    if (obs.x.size() != d) {
      throw std::invalid_argument("solve_direct: observation " + std::to_string(s) +
                                  " has dimension " + std::to_string(obs.x.size()) +
                                  ", expected " + std::to_string(d));
    }
    gram.noalias() += obs.x * obs.x.transpose();
    moment.noalias() += obs.reward * obs.x;
  }
  return gram.ldlt().solve(moment);
}

}  // namespace tlb

#endif  // TLB_LINEAR_ESTIMATOR_HPP
