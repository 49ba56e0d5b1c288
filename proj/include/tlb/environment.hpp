#ifndef TLB_ENVIRONMENT_HPP
#define TLB_ENVIRONMENT_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tlb/linear_estimator.hpp"
#include "tlb/random.hpp"

namespace tlb {

/// A thresholding linear bandit problem. Arm `i` is row `i` of `arms`; its
/// rewards are Gaussian with mean <theta, x_i> and standard deviation
/// `noise_scale`.
struct Instance {
  Matrix arms;  // K x d
  Vector theta;
  double threshold = 0.0;
  double precision = 0.0;
  double noise_scale = 1.0;
  double norm_bound = 0.0;  // max_i |x_i|, always recomputed by make_instance

  Index num_arms() const noexcept { return arms.rows(); }
  Index dim() const noexcept { return arms.cols(); }
  Vector means() const { return arms * theta; }
};

/// Validates the pieces and computes the norm bound.
inline Instance make_instance(Matrix arms, Vector theta, double threshold, double precision,
                              double noise_scale = 1.0) {
  if (arms.rows() < 1 || arms.cols() < 1) {
    throw std::invalid_argument("instance needs at least one arm and one dimension");
  }
  if (theta.size() != arms.cols()) {
    throw std::invalid_argument("theta has dimension " + std::to_string(theta.size()) +
                                " but arms have dimension " + std::to_string(arms.cols()));
  }
  if (!arms.allFinite() || !theta.allFinite() || !std::isfinite(threshold)) {
    throw std::invalid_argument("instance entries must be finite");
  }
  if (!(precision >= 0.0) || !std::isfinite(precision)) {
    throw std::invalid_argument("precision must be a finite nonnegative number");
  }
  if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) {
    throw std::invalid_argument("noise_scale must be a positive finite number");
  }
  Instance inst;
  inst.norm_bound = arms.rowwise().norm().maxCoeff();
  inst.arms = std::move(arms);
  inst.theta = std::move(theta);
  inst.threshold = threshold;
  inst.precision = precision;
  inst.noise_scale = noise_scale;
  return inst;
}

struct GroundTruth {
  Vector means;
  Vector gaps;
  double complexity = 0.0;
  bool complexity_finite = true;
  std::vector<Index> above_set;  // mu_i >= tau + eps
  std::vector<Index> below_set;  // mu_i <  tau - eps
};

inline GroundTruth ground_truth(const Instance& inst) {
  GroundTruth truth;
  truth.means = inst.means();
  const Index k = inst.num_arms();
  truth.gaps.resize(k);
  const double upper = inst.threshold + inst.precision;
  const double lower = inst.threshold - inst.precision;
  for (Index i = 0; i < k; ++i) {
    const double mu = truth.means[i];
    truth.gaps[i] = std::abs(mu - inst.threshold) + inst.precision;
    if (truth.gaps[i] == 0.0) {
      truth.complexity_finite = false;
    } else {
      truth.complexity += 1.0 / (truth.gaps[i] * truth.gaps[i]);
    }
    if (mu >= upper) truth.above_set.push_back(i);
    if (mu < lower) truth.below_set.push_back(i);
  }
  if (!truth.complexity_finite) {
    truth.complexity = std::numeric_limits<double>::infinity();
  }
  return truth;
}

inline double uniform_box(Rng& rng) {
  return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
}

/// Arms and theta drawn i.i.d. uniform on [-1, 1]^d, arms first (row by row).
inline Instance make_synthetic_instance(Index dim, Index num_arms, double threshold,
                                        double precision, Rng& rng) {
  if (dim < 1 || num_arms < 1) {
    throw std::invalid_argument("synthetic instance needs dim >= 1 and K >= 1");
  }
  Matrix arms(num_arms, dim);
  for (Index i = 0; i < num_arms; ++i) {
    for (Index j = 0; j < dim; ++j) arms(i, j) = uniform_box(rng);
  }
  Vector theta(dim);
  for (Index j = 0; j < dim; ++j) theta[j] = uniform_box(rng);
  return make_instance(std::move(arms), std::move(theta), threshold, precision);
}

/// Turns a feature table into a regression instance: theta ~ U([-1,1]^d) and
/// the threshold is the mean pseudo-reward (1/K) sum_i <theta, x_i>.
inline Instance make_regression_instance(const Matrix& features, double precision, Rng& rng) {
  if (features.rows() < 1 || features.cols() < 1) {
    throw std::invalid_argument("feature table is empty");
  }
  Vector theta(features.cols());
  for (Index j = 0; j < theta.size(); ++j) theta[j] = uniform_box(rng);
  const double threshold = (features * theta).mean();
  return make_instance(features, std::move(theta), threshold, precision);
}

/// Gaussian reward mu_arm + noise_scale * z.
inline double sample_reward(const Instance& inst, Index arm, Rng& rng) {
  if (arm < 0 || arm >= inst.num_arms()) {
    throw std::invalid_argument("arm index " + std::to_string(arm) + " out of range [0, " +
                                std::to_string(inst.num_arms()) + ")");
  }
  const double mu = inst.arms.row(arm).dot(inst.theta);
  return mu + inst.noise_scale * std::normal_distribution<double>(0.0, 1.0)(rng);
}

// ---------------------------------------------------------------------------
// Feature tables

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : std::runtime_error(what), row_(row), column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

struct FeatureTableOptions {
  bool skip_header = false;
  /// Rescale each column affinely onto [-1, 1]; constant columns map to 0.
  bool minmax_scale = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Parses a headerless numeric CSV, one arm per row. Rows and columns in error
/// messages are 1-based and count physical lines.
inline Matrix parse_feature_table(std::istream& in, const FeatureTableOptions& opts = {},
                                  const std::string& source = "<stream>") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && opts.skip_header) continue;
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    std::size_t column = 0;
    std::string_view rest(line);
    while (true) {
      ++column;
      const auto comma = rest.find(',');
      const std::string_view cell = detail::trim(rest.substr(0, comma));
      double value = 0.0;
      const char* end = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(cell.data(), end, value);
      if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
        throw ParseError(source + ": row " + std::to_string(line_no) + ", column " +
                             std::to_string(column) + ": not a finite number: '" +
                             std::string(cell) + "'",
                         line_no, column);
      }
      row.push_back(value);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      throw ParseError(source + ": row " + std::to_string(line_no) + " has " +
                           std::to_string(row.size()) + " columns, expected " +
                           std::to_string(width),
                       line_no, row.size());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw ParseError(source + ": feature table has no data rows", line_no, 0);
  }

  Matrix table(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (Index i = 0; i < table.rows(); ++i) {
    for (Index j = 0; j < table.cols(); ++j) table(i, j) = rows[i][j];
  }
  if (opts.minmax_scale) {
    for (Index j = 0; j < table.cols(); ++j) {
      const double lo = table.col(j).minCoeff();
      const double hi = table.col(j).maxCoeff();
      if (hi > lo) {
        table.col(j) = ((table.col(j).array() - lo) * (2.0 / (hi - lo)) - 1.0).matrix();
      } else {
        table.col(j).setZero();
      }
    }
  }
  return table;
}

inline Matrix load_feature_table(const std::filesystem::path& path,
                                 const FeatureTableOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open feature table '" + path.string() + "'", 0, 0);
  }
  return parse_feature_table(in, opts, path.string());
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline void write_feature_table(std::ostream& out, const Matrix& table) {
  for (Index i = 0; i < table.rows(); ++i) {
    for (Index j = 0; j < table.cols(); ++j) {
      if (j) out << ',';
      out << format_double(table(i, j));
    }
    out << '\n';
  }
}

inline Instance load_regression_instance(const std::filesystem::path& features_path,
                                         double precision, Rng& rng,
                                         const FeatureTableOptions& opts = {}) {
  return make_regression_instance(load_feature_table(features_path, opts), precision, rng);
}

// ---------------------------------------------------------------------------
// Snapshots

inline nlohmann::json to_snapshot(const Instance& inst, std::uint64_t seed) {
  nlohmann::json arms = nlohmann::json::array();
  for (Index i = 0; i < inst.num_arms(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < inst.dim(); ++j) row.push_back(inst.arms(i, j));
    arms.push_back(std::move(row));
  }
  nlohmann::json theta = nlohmann::json::array();
  for (Index j = 0; j < inst.dim(); ++j) theta.push_back(inst.theta[j]);
  return {{"arms", std::move(arms)},          {"theta", std::move(theta)},
          {"threshold", inst.threshold},      {"precision", inst.precision},
          {"noise_scale", inst.noise_scale}, {"seed", seed}};
}

inline Instance from_snapshot(const nlohmann::json& snap) {
  const auto& arms_json = snap.at("arms");
  const auto& theta_json = snap.at("theta");
  if (!arms_json.is_array() || arms_json.empty()) {
    throw std::invalid_argument("snapshot: 'arms' must be a non-empty array");
  }
  const auto k = static_cast<Index>(arms_json.size());
  const auto d = static_cast<Index>(theta_json.size());
  Matrix arms(k, d);
  for (Index i = 0; i < k; ++i) {
    const auto& row = arms_json.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != d) {
      throw std::invalid_argument("snapshot: arm " + std::to_string(i) + " has " +
                                  std::to_string(row.size()) + " entries, expected " +
                                  std::to_string(d));
    }
    for (Index j = 0; j < d; ++j) arms(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  Vector theta(d);
  for (Index j = 0; j < d; ++j) theta[j] = theta_json.at(static_cast<std::size_t>(j)).get<double>();
  return make_instance(std::move(arms), std::move(theta), snap.at("threshold").get<double>(),
                       snap.at("precision").get<double>(), snap.value("noise_scale", 1.0));
}

}  // namespace tlb

#endif  // TLB_ENVIRONMENT_HPP
