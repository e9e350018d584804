#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "airfuse/regression.hpp"
#include "airfuse/variogram.hpp"

namespace airfuse {

// Covariance matrix sigma2 * exp(-D/phi) with tau2 added on the diagonal.
Eigen::MatrixXd exponential_covariance(const Eigen::MatrixXd& dist, const ExponentialCovParams& p);
// Cross covariance between target and training points (no nugget share).
Eigen::MatrixXd exponential_cross_covariance(const Eigen::MatrixXd& dist,
                                             const ExponentialCovParams& p);

enum class Transform { None, Sqrt, Log };
Transform parse_transform(const std::string& name);
double apply_transform(Transform t, double y);
double invert_transform(Transform t, double g);

// Fitted universal-kriging model for one day: mean coefficients, exponential
// covariance parameters and the retained training data.
struct KrigingModel {
  int day = 0;
  MeanSpec spec;
  Eigen::VectorXd coefficients;
  ExponentialCovParams params;
  Transform transform = Transform::None;
  bool ml_refit = true;  // false when the day fell back to the shared covariance
  double loglik = 0.0;

  std::vector<LonLat> train_locs;
  Eigen::MatrixXd train_design;
  Eigen::VectorXd train_y;  // on the transformed scale
};

// Gaussian log-likelihood of the day's data for fixed covariance parameters,
// with the mean coefficients profiled out by generalized least squares.
struct GlsProfile {
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov;  // (X' Sigma^-1 X)^-1
  double loglik = 0.0;
};
GlsProfile gls_profile(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::MatrixXd& dist, const ExponentialCovParams& p);

struct UkFitOptions {
  Transform transform = Transform::None;
  int max_evals = 200;  // per simplex start
};

// Maximum-likelihood universal kriging: Nelder-Mead over (log tau2, log
// sigma2, log phi) from the supplied initial values plus one perturbed
// restart, beta profiled by GLS at every covariance evaluation. The returned
// likelihood never falls below the likelihood at the initial parameters.
KrigingModel uk_fit_ml(const DayTable& day, const MeanSpec& spec, const ExponentialCovParams& init,
                       const UkFitOptions& options = {});

// Generalized-least-squares mean with fixed covariance parameters; used for
// days with too few observations for a stable ML fit.
KrigingModel uk_fit_gls(const DayTable& day, const MeanSpec& spec,
                        const ExponentialCovParams& params, const UkFitOptions& options = {});

struct KrigingPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::VectorXd lower95;
  Eigen::VectorXd upper95;
};

// Universal-kriging BLUP with the mean-estimation inflation term:
//   mean = x0' beta + c0' Sigma^-1 (y - X beta)
//   var  = tau2 + sigma2 - c0' Sigma^-1 c0 + d'(X' Sigma^-1 X)^-1 d
// where d = x0 - X' Sigma^-1 c0. With tau2 = 0 the predictor interpolates the
// training data exactly. Intervals are Gaussian (mean +- 1.96 sd), mapped back
// through the transform when one is set.
KrigingPrediction uk_predict(const KrigingModel& model, const DayTable& targets);

// Shared two-stage pipeline: per-day OLS residuals are averaged over time per
// site, their empirical semivariogram is fit by WLS, and the result seeds the
// per-day ML fits (or is used directly for short days / shared_cov mode).
struct UkPipelineOptions {
  int variogram_bins = 15;
  double variogram_max_lag_km = 0.0;  // 0: half the maximum pairwise distance
  bool shared_cov = false;
  UkFitOptions fit;
};

struct UkDayFits {
  std::optional<ExponentialCovParams> shared_params;  // WLS fit on averaged residuals
  std::vector<std::optional<KrigingModel>> models;    // per day; empty when a day has no usable fit
  int ml_days = 0;
  int gls_fallback_days = 0;
  int skipped_days = 0;
};

UkDayFits uk_fit_days(const MonitorDataset& monitors, const GridDataset& grid, const MeanSpec& spec,
                      std::span<const int> train_sites, const UkPipelineOptions& options = {},
                      int workers = 1);

}  // namespace airfuse
