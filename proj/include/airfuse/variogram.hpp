#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>
#include <vector>

#include "airfuse/geo.hpp"

namespace airfuse {

struct VariogramBin {
  double mean_lag_km = 0.0;
  double semivariance = 0.0;  // Matheron estimate for the bin
  long pair_count = 0;
};

struct EmpiricalVariogram {
  std::vector<VariogramBin> bins;  // strictly increasing mean lag, empty bins dropped
};

// Exponential covariance C(d) = sigma2 * exp(-d/phi) + tau2 * 1{d = 0}; the
// matching semivariogram is gamma(h) = tau2 + sigma2 * (1 - exp(-h/phi)).
struct ExponentialCovParams {
  double nugget = 0.0;        // tau^2
  double partial_sill = 1.0;  // sigma^2
  double range_km = 1.0;      // phi

  double total_sill() const { return nugget + partial_sill; }
  double semivariance(double h) const;
  void validate() const;
};

// Carries the initial parameters when a weighted fit cannot improve on them.
class FitFailure : public Error {
public:
  FitFailure(const std::string& what, ExponentialCovParams init) : Error(what), init_(init) {}
  const ExponentialCovParams& init() const { return init_; }

private:
  ExponentialCovParams init_;
};

// Matheron estimator binned over [0, max_lag_km]; gamma(h) = sum of squared
// differences over pairs in the bin / (2 N_h). Pairs at zero distance land in
// the first bin. Bins with no pairs are dropped.
EmpiricalVariogram empirical_semivariogram(std::span<const LonLat> locs, const Eigen::VectorXd& values,
                                           int n_bins = 15, double max_lag_km = 0.0);

// Weighted least squares with Cressie weights N_h / gamma_model(h)^2,
// minimized over log-parameters by Nelder-Mead with a perturbed restart.
// The returned objective never exceeds the objective at `init`.
ExponentialCovParams fit_exponential_wls(const EmpiricalVariogram& vg, const ExponentialCovParams& init);

// Heuristic starting point read off the empirical curve.
ExponentialCovParams variogram_init_guess(const EmpiricalVariogram& vg);

// The WLS objective; exposed for verification.
double wls_objective(const EmpiricalVariogram& vg, const ExponentialCovParams& p);

}  // namespace airfuse
