#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "airfuse/dataset.hpp"

namespace airfuse {

// Mean structure shared by the per-day regressions and universal kriging:
// intercept plus model output and/or named covariates.
struct MeanSpec {
  enum class Kind { CmaqOnly, CovsOnly, CmaqPlusCovs };
  Kind kind = Kind::CmaqOnly;
  std::vector<std::string> covariates;

  static MeanSpec cmaq_only() { return {Kind::CmaqOnly, {}}; }
  static MeanSpec covs_only(std::vector<std::string> names);
  static MeanSpec cmaq_plus_covs(std::vector<std::string> names);

  bool uses_cmaq() const { return kind != Kind::CovsOnly; }
  bool uses_covariates() const { return kind != Kind::CmaqOnly; }
  int n_regressors() const;  // design columns excluding the intercept
  std::string label() const;
};

// Column names of the design matrix: intercept, cmaq, covariates.
std::vector<std::string> design_names(const MeanSpec& spec);

// Builds [1 | z | x_selected]; throws MissingCovariate when a requested
// covariate is absent from the table.
Eigen::MatrixXd design_matrix(const DayTable& table, const MeanSpec& spec);

struct OlsFit {
  int day = 0;
  MeanSpec spec;
  Eigen::VectorXd coefficients;
  double residual_variance = 0.0;  // RSS / (n - q)
  Eigen::VectorXd residuals;       // per training row, for variogram use
  Eigen::MatrixXd xtx_inverse;     // (X'X)^{-1}, for prediction leverage
  int n_train = 0;

  int n_coefficients() const { return static_cast<int>(coefficients.size()); }
  int df() const { return n_train - n_coefficients(); }
};

// Per-day ordinary least squares. Requires strictly more observations than
// regressors + 1 and a full-rank design (collinear columns are named).
OlsFit ols_fit_day(const DayTable& day, const MeanSpec& spec);

struct IntervalPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::VectorXd lower95;
  Eigen::VectorXd upper95;
};

// New-observation prediction: variance = s^2 (1 + x0'(X'X)^{-1} x0), 95%
// interval from Student-t with n - q degrees of freedom.
IntervalPrediction ols_predict(const OlsFit& fit, const DayTable& targets);

struct BestSubsetResult {
  int chosen_size = 0;
  std::vector<std::string> chosen;                     // full-data refit at the chosen size
  std::vector<double> cv_rmse;                         // indexed by subset size, from 0
  std::vector<std::vector<std::string>> best_by_size;  // full-data best subset per size
};

// Exhaustive best-subset selection over pooled site-day rows with site-level
// k-fold cross validation. Within each fold the best subset of every size is
// re-searched on the training rows (minimum RSS); per-size RMSEs are averaged
// across folds. The chosen size is the last one before a size improves the CV
// RMSE by less than 0.1% relative to the previous size; the final subset of
// that size is re-searched on the full data. Candidate budget: 24 predictors.
BestSubsetResult best_subset_select(const MonitorDataset& monitors, const GridDataset& grid,
                                    std::span<const std::string> candidates, int max_size,
                                    int k_folds, std::uint64_t seed);

}  // namespace airfuse
