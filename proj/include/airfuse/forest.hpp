#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "airfuse/error.hpp"

namespace airfuse {

struct ForestConfig {
  int n_trees = 500;
  int m_try = 0;         // 0: floor(p / 3), clamped to [1, p]
  int min_leaf = 5;
  int max_depth = 0;     // 0: unlimited
  bool bootstrap = true; // debug flag; when off every tree sees all rows
  std::uint64_t seed = 0;

  int resolved_m_try(int p) const;
  void validate() const;
};

// One regression-feature row: longitude, latitude, day of year, the selected
// covariates and the model output, flattened in that order.
struct FeatureRow {
  double lon = 0.0;
  double lat = 0.0;
  int day_of_year = 0;
  Eigen::VectorXd covariates;
  double model_output = 0.0;
};

Eigen::MatrixXd feature_matrix(std::span<const FeatureRow> rows);
std::vector<std::string> feature_names(std::span<const std::string> covariate_names);

// Binary regression tree stored as flat node arrays.
struct Tree {
  std::vector<int> feature;      // -1 for leaves
  std::vector<double> threshold;
  std::vector<int> left, right;
  std::vector<double> value;     // leaf mean

  double predict(const Eigen::RowVectorXd& row) const;
};

class Forest {
public:
  Forest() = default;
  Forest(std::vector<Tree> trees, std::vector<std::vector<std::uint8_t>> in_bag, int n_features,
         ForestConfig config)
      : trees_(std::move(trees)), in_bag_(std::move(in_bag)), n_features_(n_features),
        config_(config) {}

  int n_trees() const { return static_cast<int>(trees_.size()); }
  int n_features() const { return n_features_; }
  const ForestConfig& config() const { return config_; }
  const std::vector<Tree>& trees() const { return trees_; }
  bool in_bag(int tree, long row) const { return in_bag_.at(tree).at(row) != 0; }
  long n_train_rows() const { return in_bag_.empty() ? 0 : static_cast<long>(in_bag_[0].size()); }

  void save(const std::string& path) const;      // versioned binary, magic FMRF1
  static Forest load(const std::string& path);

private:
  std::vector<Tree> trees_;
  std::vector<std::vector<std::uint8_t>> in_bag_;  // per tree, per training row
  int n_features_ = 0;
  ForestConfig config_;
};

// Grows n_trees on with-replacement bootstraps of size n; each split samples
// m_try features without replacement and picks the (feature, midpoint
// threshold) pair minimizing the children SSE, ties broken by lower feature
// index then lower threshold. Deterministic for a given seed; sampling indexes
// rows in the order given, so callers sort rows canonically first.
Forest rf_train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& config,
                int workers = 1);

struct ForestPrediction {
  double mean = 0.0;
  double variance = 0.0;  // sample variance across tree predictions
};

ForestPrediction rf_predict(const Forest& forest, const Eigen::RowVectorXd& row);

struct OobCurvePoint {
  int n_trees = 0;
  double rmse = 0.0;
};

struct OobResult {
  std::vector<OobCurvePoint> curve;  // evaluated at {10, 50, 100, 250, 500, n_trees}
  long excluded_rows = 0;            // rows in-bag for every prefix tree
};

// Out-of-bag RMSE over prefixes of the tree list; a row's OOB prediction
// averages only trees whose bootstrap excluded it.
OobResult rf_oob_error(const Forest& forest, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

}  // namespace airfuse
