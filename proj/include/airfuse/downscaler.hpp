#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "airfuse/dataset.hpp"

namespace airfuse {

// Priors for the per-day calibration model
//   y(s) = beta0 + w(s) + beta1 * z(s) + eps,   eps ~ N(0, tau2)
//   w ~ GP(0, sigma0^2 * exp(-phi0 * d)),       phi0 ~ Uniform(decay_lo, decay_hi)
// The decay is a per-km rate: correlation exp(-phi0 * d_km).
struct DownscalerPriors {
  Eigen::Vector2d beta_mean{0.0, 1.0};
  Eigen::Vector2d beta_variance{1e6, 1e6};
  double nugget_shape = 2.0;  // Inverse-Gamma for tau2
  double nugget_scale = 1.0;
  double sill_shape = 2.0;  // Inverse-Gamma for sigma0^2
  double sill_scale = 1.0;
  double decay_lo = 1e-4;
  double decay_hi = 0.1;

  void validate() const;
};

struct McmcConfig {
  int n_iter = 10000;
  int n_burn = 5000;
  int thin = 1;
  std::uint64_t seed = 0;
  double initial_step = 0.5;  // random-walk sd on log phi0
  int adapt_interval = 100;   // step adaptation cadence during burn-in

  // Optional chain-start overrides, mainly for burn-in diagnostics.
  std::optional<Eigen::Vector2d> init_beta;
  std::optional<double> init_nugget;
  std::optional<double> init_sill;
  std::optional<double> init_decay;

  int n_kept() const { return (n_iter - n_burn) / thin; }
  void validate() const;
};

// Retained posterior samples for one day's chain.
struct DownscalerPosterior {
  int day = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd beta0, beta1;     // global calibration coefficients
  Eigen::VectorXd nugget;           // tau2 samples
  Eigen::VectorXd sill;             // sigma0^2 samples
  Eigen::VectorXd decay;            // phi0 samples
  Eigen::MatrixXd intercept_field;  // n_sites x n_kept latent deviations w(s)
  std::vector<LonLat> train_locs;
  double acceptance_rate = 0.0;  // phi0 acceptance after burn-in

  int n_kept() const { return static_cast<int>(beta0.size()); }
};

// Metropolis-within-Gibbs sampler: conjugate Gaussian updates for the
// coefficients and the latent intercept field (drawn jointly), conjugate
// Inverse-Gamma updates for both variances, and an adapted random-walk
// Metropolis step on log phi0 restricted to the prior support. Deterministic
// for a given seed.
DownscalerPosterior downscaler_fit(const DayTable& day, const DownscalerPriors& priors,
                                   const McmcConfig& mcmc);

struct DownscalerPrediction {
  Eigen::VectorXd median;
  Eigen::VectorXd lower95;   // 2.5th percentile of the predictive draws
  Eigen::VectorXd upper95;   // 97.5th percentile
  Eigen::VectorXd variance;  // sample variance of the draws
};

// Posterior-predictive prediction: for each retained sample (evenly thinned to
// at most n_draws) the latent intercept is kriged to the target as a
// conditional Gaussian draw, the slope term and fresh nugget noise are added,
// and per-target quantiles summarize the draws.
DownscalerPrediction downscaler_predict(const DownscalerPosterior& post, const DayTable& targets,
                                        int n_draws = 500);

}  // namespace airfuse
