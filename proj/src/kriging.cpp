#include "airfuse/kriging.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "airfuse/optim.hpp"
#include "airfuse/parallel.hpp"
#include "airfuse/stats.hpp"

namespace airfuse {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

// Cholesky with an escalating relative jitter; throws when even the largest
// jitter leaves the matrix indefinite.
Eigen::LLT<Eigen::MatrixXd> robust_llt(Eigen::MatrixXd cov, const char* what) {
  const double scale = std::max(cov.diagonal().maxCoeff(), 1e-300);
  for (double jitter : {0.0, 1e-12, 1e-10, 1e-8}) {
    Eigen::MatrixXd work = cov;
    if (jitter > 0.0) work.diagonal().array() += jitter * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalError(std::string(what) + ": covariance not positive definite after jitter");
}

}  // namespace

Eigen::MatrixXd exponential_covariance(const Eigen::MatrixXd& dist, const ExponentialCovParams& p) {
  Eigen::MatrixXd cov = p.partial_sill * (-dist / p.range_km).array().exp().matrix();
  cov.diagonal().array() += p.nugget;
  return cov;
}

Eigen::MatrixXd exponential_cross_covariance(const Eigen::MatrixXd& dist,
                                             const ExponentialCovParams& p) {
  return p.partial_sill * (-dist / p.range_km).array().exp().matrix();
}

Transform parse_transform(const std::string& name) {
  if (name == "none") return Transform::None;
  if (name == "sqrt") return Transform::Sqrt;
  if (name == "log") return Transform::Log;
  throw ConfigError("unknown transform '" + name + "' (expected none, sqrt or log)");
}

double apply_transform(Transform t, double y) {
  switch (t) {
    case Transform::None: return y;
    case Transform::Sqrt:
      if (y < 0.0) throw InvalidArgument("sqrt transform: negative observation");
      return std::sqrt(y);
    case Transform::Log:
      if (y <= 0.0) throw InvalidArgument("log transform: non-positive observation");
      return std::log(y);
  }
  return y;
}

double invert_transform(Transform t, double g) {
  switch (t) {
    case Transform::None: return g;
    case Transform::Sqrt: return g * g;
    case Transform::Log: return std::exp(g);
  }
  return g;
}

GlsProfile gls_profile(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::MatrixXd& dist, const ExponentialCovParams& p) {
  const Eigen::Index n = y.size();
  const Eigen::LLT<Eigen::MatrixXd> llt = robust_llt(exponential_covariance(dist, p), "gls");
  const Eigen::MatrixXd l = llt.matrixL();

  // whiten: solve L a = X, L b = y
  const Eigen::MatrixXd a = l.triangularView<Eigen::Lower>().solve(x);
  const Eigen::VectorXd b = l.triangularView<Eigen::Lower>().solve(y);

  GlsProfile out;
  const Eigen::MatrixXd ata = a.transpose() * a;
  out.beta_cov = ata.ldlt().solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
  out.beta = out.beta_cov * (a.transpose() * b);
  const Eigen::VectorXd resid = b - a * out.beta;
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(l(i, i));
  out.loglik = -0.5 * (n * kLog2Pi + logdet + resid.squaredNorm());
  return out;
}

namespace {

KrigingModel make_model(const DayTable& day, const MeanSpec& spec, const Eigen::MatrixXd& x,
                        const Eigen::VectorXd& y, const GlsProfile& gls,
                        const ExponentialCovParams& params, Transform transform, bool ml_refit) {
  KrigingModel m;
  m.day = day.day;
  m.spec = spec;
  m.coefficients = gls.beta;
  m.params = params;
  m.transform = transform;
  m.ml_refit = ml_refit;
  m.loglik = gls.loglik;
  m.train_locs = day.locs;
  m.train_design = x;
  m.train_y = y;
  return m;
}

Eigen::VectorXd transformed_y(const DayTable& day, Transform t) {
  Eigen::VectorXd y = day.y;
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = apply_transform(t, y(i));
  return y;
}

}  // namespace

KrigingModel uk_fit_ml(const DayTable& day, const MeanSpec& spec, const ExponentialCovParams& init,
                       const UkFitOptions& options) {
  const int n = day.n();
  const int q = 1 + spec.n_regressors();
  if (n <= spec.n_regressors() + 2) {
    throw InsufficientData("uk ml: day " + std::to_string(day.day) + " has only " +
                           std::to_string(n) + " observations");
  }
  init.validate();
  const Eigen::MatrixXd x = design_matrix(day, spec);
  const Eigen::VectorXd y = transformed_y(day, options.transform);
  const Eigen::MatrixXd dist = distance_matrix(day.locs);

  const double var_scale = std::max(init.total_sill(), 1e-12);
  auto unpack = [&](const Eigen::VectorXd& v) {
    ExponentialCovParams p;
    p.nugget = std::exp(v(0));
    p.partial_sill = std::exp(v(1));
    p.range_km = std::exp(v(2));
    return p;
  };
  auto negloglik = [&](const Eigen::VectorXd& v) {
    const ExponentialCovParams p = unpack(v);
    if (p.partial_sill > 1e8 * var_scale || p.nugget > 1e8 * var_scale || p.range_km > 1e7 ||
        p.range_km < 1e-4) {
      return std::numeric_limits<double>::infinity();
    }
    try {
      return -gls_profile(x, y, dist, p).loglik;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Eigen::VectorXd v0(3);
  v0 << std::log(std::max(init.nugget, 1e-6 * var_scale)), std::log(std::max(init.partial_sill, 1e-6 * var_scale)),
      std::log(init.range_km);

  SimplexOptions opts;
  opts.max_evals = options.max_evals;
  SimplexResult best = nelder_mead(negloglik, v0, opts);
  Eigen::VectorXd vp = v0;
  vp(0) += 1.5;
  vp(2) -= 1.0;
  const SimplexResult alt = nelder_mead(negloglik, vp, opts);
  if (alt.value < best.value) best = alt;
  const SimplexResult polish = nelder_mead(negloglik, best.x, opts);
  if (polish.value < best.value) best = polish;

  const double init_loglik = gls_profile(x, y, dist, init).loglik;
  ExponentialCovParams fitted = unpack(best.x);
  if (!std::isfinite(best.value) || -best.value < init_loglik - 1e-9) {
    fitted = init;  // keep the initial parameters if the search went nowhere
  }
  const GlsProfile gls = gls_profile(x, y, dist, fitted);
  (void)q;
  return make_model(day, spec, x, y, gls, fitted, options.transform, true);
}

KrigingModel uk_fit_gls(const DayTable& day, const MeanSpec& spec,
                        const ExponentialCovParams& params, const UkFitOptions& options) {
  const int q = 1 + spec.n_regressors();
  if (day.n() < q) {
    throw InsufficientData("uk gls: day " + std::to_string(day.day) + " has fewer observations than coefficients");
  }
  params.validate();
  const Eigen::MatrixXd x = design_matrix(day, spec);
  const Eigen::VectorXd y = transformed_y(day, options.transform);
  const Eigen::MatrixXd dist = distance_matrix(day.locs);
  const GlsProfile gls = gls_profile(x, y, dist, params);
  return make_model(day, spec, x, y, gls, params, options.transform, false);
}

KrigingPrediction uk_predict(const KrigingModel& model, const DayTable& targets) {
  const Eigen::Index n = model.train_y.size();
  const Eigen::Index m = targets.n();
  const Eigen::MatrixXd x0 = design_matrix(targets, model.spec);
  if (x0.cols() != model.coefficients.size()) {
    throw MissingCovariate("uk predict: design width differs from the fitted model");
  }

  const Eigen::MatrixXd dist = distance_matrix(model.train_locs);
  const Eigen::LLT<Eigen::MatrixXd> llt =
      robust_llt(exponential_covariance(dist, model.params), "uk predict");

  const Eigen::VectorXd resid = model.train_y - model.train_design * model.coefficients;
  const Eigen::VectorXd alpha = llt.solve(resid);            // Sigma^-1 (y - X beta)
  const Eigen::MatrixXd sigma_inv_x = llt.solve(model.train_design);
  const Eigen::MatrixXd xtsx = model.train_design.transpose() * sigma_inv_x;
  const Eigen::MatrixXd xtsx_inv =
      xtsx.ldlt().solve(Eigen::MatrixXd::Identity(xtsx.rows(), xtsx.cols()));

  const Eigen::MatrixXd cross_dist = cross_distance_matrix(targets.locs, model.train_locs);
  const Eigen::MatrixXd c0 = exponential_cross_covariance(cross_dist, model.params);  // m x n

  KrigingPrediction out;
  out.mean.resize(m);
  out.variance.resize(m);
  const double total_sill = model.params.total_sill();
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXd ci = c0.row(i).transpose();
    const Eigen::VectorXd sigma_inv_ci = llt.solve(ci);
    const Eigen::VectorXd d = x0.row(i).transpose() - sigma_inv_x.transpose() * ci;
    out.mean(i) = x0.row(i) * model.coefficients + ci.dot(alpha);
    const double v = total_sill - ci.dot(sigma_inv_ci) + d.dot(xtsx_inv * d);
    out.variance(i) = std::max(0.0, v);
  }
  (void)n;

  out.lower95 = out.mean - 1.96 * out.variance.cwiseSqrt();
  out.upper95 = out.mean + 1.96 * out.variance.cwiseSqrt();
  if (model.transform != Transform::None) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double mu = out.mean(i);
      const double sd = std::sqrt(out.variance(i));
      // quantile mapping: back-transform the predictive median and interval
      out.mean(i) = invert_transform(model.transform, mu);
      out.lower95(i) = invert_transform(model.transform, mu - 1.96 * sd);
      out.upper95(i) = invert_transform(model.transform, mu + 1.96 * sd);
      // delta-method variance on the original scale
      const double slope = model.transform == Transform::Log ? std::exp(mu) : 2.0 * mu;
      out.variance(i) *= slope * slope;
    }
  }
  return out;
}

UkDayFits uk_fit_days(const MonitorDataset& monitors, const GridDataset& grid, const MeanSpec& spec,
                      std::span<const int> train_sites, const UkPipelineOptions& options,
                      int workers) {
  const int n_days = monitors.n_days();
  UkDayFits fits;
  fits.models.resize(n_days);

  // Stage 1: per-day OLS residuals (on the fitting scale), averaged per site.
  std::map<int, std::pair<double, int>> site_resid;  // site -> (sum, count)
  std::vector<DayTable> tables(n_days);
  for (int t = 0; t < n_days; ++t) {
    tables[t] = make_day_table(monitors, grid, t, train_sites);
    const DayTable& tab = tables[t];
    if (tab.n() <= spec.n_regressors() + 1) continue;
    DayTable work = tab;
    for (Eigen::Index i = 0; i < work.y.size(); ++i) {
      work.y(i) = apply_transform(options.fit.transform, work.y(i));
    }
    OlsFit ols;
    try {
      ols = ols_fit_day(work, spec);
    } catch (const SingularDesign&) {
      continue;
    }
    for (int k = 0; k < work.n(); ++k) {
      auto& acc = site_resid[work.site_rows[k]];
      acc.first += ols.residuals(k);
      acc.second += 1;
    }
  }

  if (site_resid.size() >= 3) {
    std::vector<LonLat> locs;
    Eigen::VectorXd values(static_cast<Eigen::Index>(site_resid.size()));
    Eigen::Index i = 0;
    for (const auto& [site, acc] : site_resid) {
      locs.push_back(monitors.site(site).loc);
      values(i++) = acc.first / acc.second;
    }
    try {
      const EmpiricalVariogram vg = empirical_semivariogram(
          locs, values, options.variogram_bins, options.variogram_max_lag_km);
      if (static_cast<int>(vg.bins.size()) >= 3) {
        fits.shared_params = fit_exponential_wls(vg, variogram_init_guess(vg));
      }
    } catch (const Error&) {
      // fall through to the default below
    }
  }
  if (!fits.shared_params) {
    // degenerate geometry or too few residuals: a weakly informative default
    double var = 1.0;
    std::vector<double> all;
    for (int t = 0; t < n_days; ++t) {
      for (Eigen::Index i = 0; i < tables[t].y.size(); ++i) all.push_back(tables[t].y(i));
    }
    if (all.size() > 1) {
      Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(all.data(), static_cast<Eigen::Index>(all.size()));
      var = std::max(sample_variance(v), 1e-6);
    }
    ExponentialCovParams p;
    p.nugget = 0.5 * var;
    p.partial_sill = 0.5 * var;
    p.range_km = 200.0;
    fits.shared_params = p;
  }

  // Stage 2: per-day fits, parallel over days.
  std::vector<int> ml(n_days, 0), gls_fb(n_days, 0), skipped(n_days, 0);
  const int q = 1 + spec.n_regressors();
  parallel_for(static_cast<std::size_t>(n_days), workers, [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    const DayTable& tab = tables[t];
    if (tab.n() < q) {
      skipped[t] = 1;
      return;
    }
    if (!options.shared_cov && tab.n() >= spec.n_regressors() + 3) {
      try {
        fits.models[t] = uk_fit_ml(tab, spec, *fits.shared_params, options.fit);
        ml[t] = 1;
        return;
      } catch (const Error&) {
        // fall back to the shared covariance below
      }
    }
    try {
      fits.models[t] = uk_fit_gls(tab, spec, *fits.shared_params, options.fit);
      gls_fb[t] = 1;
    } catch (const Error&) {
      skipped[t] = 1;
    }
  });
  for (int t = 0; t < n_days; ++t) {
    fits.ml_days += ml[t];
    fits.gls_fallback_days += gls_fb[t];
    fits.skipped_days += skipped[t];
  }
  return fits;
}

}  // namespace airfuse
