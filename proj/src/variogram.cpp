#include "airfuse/variogram.hpp"

#include <algorithm>
#include <cmath>

#include "airfuse/optim.hpp"

namespace airfuse {

double ExponentialCovParams::semivariance(double h) const {
  if (h <= 0.0) return 0.0;
  return nugget + partial_sill * (1.0 - std::exp(-h / range_km));
}

void ExponentialCovParams::validate() const {
  if (!(nugget >= 0.0)) throw InvalidArgument("covariance: nugget must be >= 0");
  if (!(partial_sill > 0.0)) throw InvalidArgument("covariance: partial sill must be > 0");
  if (!(range_km > 0.0)) throw InvalidArgument("covariance: range must be > 0");
}

EmpiricalVariogram empirical_semivariogram(std::span<const LonLat> locs, const Eigen::VectorXd& values,
                                           int n_bins, double max_lag_km) {
  const int n = static_cast<int>(locs.size());
  if (n < 2) throw InvalidArgument("semivariogram: need at least two points");
  if (values.size() != n) throw InvalidArgument("semivariogram: size mismatch");
  if (n_bins < 1) throw InvalidArgument("semivariogram: n_bins must be positive");

  double max_pair = 0.0;
  Eigen::MatrixXd dist(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = haversine_km(locs[i], locs[j]);
      dist(i, j) = d;
      max_pair = std::max(max_pair, d);
    }
  }
  if (max_pair <= 0.0) throw DegenerateGeometry("semivariogram: all points are co-located");
  // default: half the maximum pairwise distance
  const double max_lag = max_lag_km > 0.0 ? max_lag_km : 0.5 * max_pair;

  std::vector<double> sq_sum(n_bins, 0.0), lag_sum(n_bins, 0.0);
  std::vector<long> count(n_bins, 0);
  const double width = max_lag / n_bins;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = dist(i, j);
      if (d > max_lag) continue;
      // zero-distance pairs land in bin 0; otherwise (k*w, (k+1)*w]
      int bin = d <= 0.0 ? 0 : static_cast<int>(std::ceil(d / width)) - 1;
      bin = std::clamp(bin, 0, n_bins - 1);
      const double diff = values(i) - values(j);
      sq_sum[bin] += diff * diff;
      lag_sum[bin] += d;
      count[bin] += 1;
    }
  }

  EmpiricalVariogram vg;
  for (int b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    VariogramBin bin;
    bin.pair_count = count[b];
    bin.mean_lag_km = lag_sum[b] / count[b];
    bin.semivariance = sq_sum[b] / (2.0 * count[b]);
    vg.bins.push_back(bin);
  }
  return vg;
}

double wls_objective(const EmpiricalVariogram& vg, const ExponentialCovParams& p) {
  double obj = 0.0;
  for (const VariogramBin& b : vg.bins) {
    const double model = std::max(p.semivariance(b.mean_lag_km), 1e-12);
    const double r = (b.semivariance - model) / model;
    obj += static_cast<double>(b.pair_count) * r * r;
  }
  return obj;
}

ExponentialCovParams variogram_init_guess(const EmpiricalVariogram& vg) {
  if (vg.bins.empty()) throw InvalidArgument("variogram init: empty variogram");
  double max_gamma = 0.0, max_lag = 0.0;
  for (const VariogramBin& b : vg.bins) {
    max_gamma = std::max(max_gamma, b.semivariance);
    max_lag = std::max(max_lag, b.mean_lag_km);
  }
  if (max_gamma <= 0.0) max_gamma = 1e-6;
  ExponentialCovParams p;
  p.nugget = std::max(0.5 * vg.bins.front().semivariance, 1e-3 * max_gamma);
  p.partial_sill = std::max(max_gamma - p.nugget, 1e-2 * max_gamma);
  p.range_km = std::max(max_lag / 3.0, 1e-3);
  return p;
}

ExponentialCovParams fit_exponential_wls(const EmpiricalVariogram& vg,
                                         const ExponentialCovParams& init) {
  if (static_cast<int>(vg.bins.size()) < 3) {
    throw InsufficientData("variogram fit: need at least 3 bins, have " +
                           std::to_string(vg.bins.size()));
  }
  const double floor_tau = std::max(1e-8 * std::max(init.total_sill(), 1e-12), 1e-12);

  auto unpack = [&](const Eigen::VectorXd& x) {
    ExponentialCovParams p;
    p.nugget = std::exp(x(0));
    p.partial_sill = std::exp(x(1));
    p.range_km = std::exp(x(2));
    return p;
  };
  auto objective = [&](const Eigen::VectorXd& x) { return wls_objective(vg, unpack(x)); };

  Eigen::VectorXd x0(3);
  x0 << std::log(std::max(init.nugget, floor_tau)), std::log(std::max(init.partial_sill, 1e-12)),
      std::log(std::max(init.range_km, 1e-6));

  SimplexOptions opts;
  opts.max_evals = 600;
  SimplexResult best = nelder_mead(objective, x0, opts);
  // restart from the incumbent and from a perturbed start
  SimplexResult r2 = nelder_mead(objective, best.x, opts);
  if (r2.value < best.value) best = r2;
  Eigen::VectorXd xp = x0;
  xp(2) += 1.0;
  xp(0) -= 1.0;
  SimplexResult r3 = nelder_mead(objective, xp, opts);
  if (r3.value < best.value) best = r3;

  const double init_obj = wls_objective(vg, init);
  if (!std::isfinite(best.value) || best.value > init_obj + 1e-12) {
    throw FitFailure("variogram fit: optimizer could not match the initial objective", init);
  }
  return unpack(best.x);
}

}  // namespace airfuse
