#include "airfuse/downscaler.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "airfuse/rng.hpp"
#include "airfuse/stats.hpp"

namespace airfuse {

void DownscalerPriors::validate() const {
  if (!(beta_variance(0) > 0.0) || !(beta_variance(1) > 0.0)) {
    throw InvalidArgument("downscaler priors: coefficient variances must be positive");
  }
  if (!(nugget_shape > 0.0) || !(nugget_scale > 0.0) || !(sill_shape > 0.0) || !(sill_scale > 0.0)) {
    throw InvalidArgument("downscaler priors: Inverse-Gamma parameters must be positive");
  }
  if (!(decay_lo > 0.0) || !(decay_hi > decay_lo)) {
    throw InvalidArgument("downscaler priors: decay bounds need 0 < lo < hi");
  }
}

void McmcConfig::validate() const {
  if (n_iter < 1 || n_burn < 0) throw ConfigError("mcmc: iteration counts must be positive");
  if (n_burn >= n_iter) throw ConfigError("mcmc: burn-in must be shorter than the chain");
  if (thin < 1) throw ConfigError("mcmc: thin must be at least 1");
  if (n_kept() < 1) throw ConfigError("mcmc: no samples retained after burn-in and thinning");
  if (!(initial_step > 0.0)) throw ConfigError("mcmc: step size must be positive");
  if (adapt_interval < 1) throw ConfigError("mcmc: adaptation interval must be positive");
}

namespace {

constexpr double kCorrelationJitter = 1e-10;

struct CorrelationState {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::MatrixXd inverse;  // filled on demand; proposals only need the factor
  double logdet = 0.0;

  void ensure_inverse(Eigen::Index n) {
    if (inverse.rows() != n) inverse = llt.solve(Eigen::MatrixXd::Identity(n, n));
  }
};

CorrelationState correlation_state(const Eigen::MatrixXd& dist, double decay,
                                   bool with_inverse = true) {
  CorrelationState st;
  Eigen::MatrixXd r = (-decay * dist).array().exp().matrix();
  r.diagonal().array() += kCorrelationJitter;
  st.llt.compute(r);
  if (st.llt.info() != Eigen::Success) {
    throw NumericalError("downscaler: correlation matrix factorization failed");
  }
  st.logdet = 0.0;
  const auto& l = st.llt.matrixLLT();
  for (Eigen::Index i = 0; i < dist.rows(); ++i) st.logdet += 2.0 * std::log(l(i, i));
  if (with_inverse) st.ensure_inverse(dist.rows());
  return st;
}

}  // namespace

DownscalerPosterior downscaler_fit(const DayTable& day, const DownscalerPriors& priors,
                                   const McmcConfig& mcmc) {
  priors.validate();
  mcmc.validate();
  const int n = day.n();
  if (n < 5) {
    throw InsufficientData("downscaler: day " + std::to_string(day.day) + " has " +
                           std::to_string(n) + " observations; need at least 5");
  }

  const Eigen::MatrixXd dist = distance_matrix(day.locs);
  Eigen::MatrixXd m(n, 2);
  m.col(0).setOnes();
  m.col(1) = day.z;
  const Eigen::VectorXd& y = day.y;

  Rng rng(derive_seed(mcmc.seed, 0xD05C));

  // chain start: data-informed defaults, overridable
  Eigen::Vector2d beta = priors.beta_mean;
  {
    const Eigen::Matrix2d mtm = m.transpose() * m;
    if (std::abs(mtm.determinant()) > 1e-12) {
      beta = mtm.ldlt().solve(m.transpose() * y);
    }
  }
  if (mcmc.init_beta) beta = *mcmc.init_beta;
  const double resid_var = std::max(sample_variance(y - m * beta), 1e-4);
  double tau2 = mcmc.init_nugget.value_or(0.5 * resid_var);
  double sigma02 = mcmc.init_sill.value_or(0.5 * resid_var);
  double decay = mcmc.init_decay.value_or(std::sqrt(priors.decay_lo * priors.decay_hi));
  decay = std::clamp(decay, priors.decay_lo, priors.decay_hi);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);

  CorrelationState corr = correlation_state(dist, decay);

  const Eigen::Matrix2d prior_precision =
      Eigen::Vector2d(1.0 / priors.beta_variance(0), 1.0 / priors.beta_variance(1)).asDiagonal();
  const Eigen::Vector2d prior_term = prior_precision * priors.beta_mean;

  const int n_kept = mcmc.n_kept();
  DownscalerPosterior post;
  post.day = day.day;
  post.seed = mcmc.seed;
  post.beta0.resize(n_kept);
  post.beta1.resize(n_kept);
  post.nugget.resize(n_kept);
  post.sill.resize(n_kept);
  post.decay.resize(n_kept);
  post.intercept_field.resize(n, n_kept);
  post.train_locs = day.locs;

  double step = mcmc.initial_step;
  int batch_accepts = 0, batch_total = 0;
  long kept_accepts = 0, kept_total = 0;
  int kept = 0;

  for (int iter = 0; iter < mcmc.n_iter; ++iter) {
    // beta | w, tau2 (bivariate Gaussian)
    {
      const Eigen::Matrix2d precision = m.transpose() * m / tau2 + prior_precision;
      const Eigen::Vector2d rhs = m.transpose() * (y - w) / tau2 + prior_term;
      const Eigen::LLT<Eigen::Matrix2d> llt(precision);
      const Eigen::Vector2d mean = llt.solve(rhs);
      Eigen::Vector2d zdraw(rng.normal(), rng.normal());
      beta = mean + llt.matrixU().solve(zdraw);
    }

    // w | beta, tau2, sigma0^2, phi0 (joint Gaussian)
    {
      Eigen::MatrixXd precision = corr.inverse / sigma02;
      precision.diagonal().array() += 1.0 / tau2;
      const Eigen::LLT<Eigen::MatrixXd> llt(precision);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("downscaler: latent-field precision factorization failed");
      }
      const Eigen::VectorXd rhs = (y - m * beta) / tau2;
      const Eigen::VectorXd mean = llt.solve(rhs);
      Eigen::VectorXd zdraw(n);
      for (int i = 0; i < n; ++i) zdraw(i) = rng.normal();
      w = mean + llt.matrixU().solve(zdraw);
    }

    // tau2 | beta, w (conjugate Inverse-Gamma)
    {
      const double rss = (y - m * beta - w).squaredNorm();
      tau2 = rng.inverse_gamma(priors.nugget_shape + 0.5 * n, priors.nugget_scale + 0.5 * rss);
    }

    // sigma0^2 | w, phi0 (conjugate Inverse-Gamma)
    const double wrw = w.dot(corr.inverse * w);
    sigma02 = rng.inverse_gamma(priors.sill_shape + 0.5 * n, priors.sill_scale + 0.5 * wrw);

    // phi0 | w, sigma0^2 (random-walk Metropolis on the log scale)
    {
      ++batch_total;
      const double proposal = decay * std::exp(step * rng.normal());
      const double u = rng.uniform();
      if (proposal >= priors.decay_lo && proposal <= priors.decay_hi) {
        try {
          CorrelationState cand = correlation_state(dist, proposal, false);
          const Eigen::VectorXd sol = cand.llt.solve(w);
          const double cand_quad = w.dot(sol);
          const double log_target_cand = -0.5 * cand.logdet - 0.5 * cand_quad / sigma02;
          const double log_target_cur = -0.5 * corr.logdet - 0.5 * wrw / sigma02;
          const double log_ratio =
              log_target_cand - log_target_cur + std::log(proposal) - std::log(decay);
          if (std::log(u) < log_ratio) {
            cand.ensure_inverse(n);
            decay = proposal;
            corr = std::move(cand);
            ++batch_accepts;
            if (iter >= mcmc.n_burn) ++kept_accepts;
          }
        } catch (const NumericalError&) {
          // proposal rejected
        }
      }
      if (iter >= mcmc.n_burn) ++kept_total;

      // step adaptation toward a 0.30-0.45 acceptance rate, burn-in only
      if (iter < mcmc.n_burn && batch_total == mcmc.adapt_interval) {
        const double rate = static_cast<double>(batch_accepts) / batch_total;
        if (rate < 0.30) step *= 0.8;
        if (rate > 0.45) step *= 1.25;
        step = std::clamp(step, 1e-3, 10.0);
        batch_accepts = 0;
        batch_total = 0;
      }
    }

    if (iter >= mcmc.n_burn && (iter - mcmc.n_burn) % mcmc.thin == 0 && kept < n_kept) {
      post.beta0(kept) = beta(0);
      post.beta1(kept) = beta(1);
      post.nugget(kept) = tau2;
      post.sill(kept) = sigma02;
      post.decay(kept) = decay;
      post.intercept_field.col(kept) = w;
      ++kept;
    }
  }

  post.acceptance_rate = kept_total > 0 ? static_cast<double>(kept_accepts) / kept_total : 0.0;
  return post;
}

DownscalerPrediction downscaler_predict(const DownscalerPosterior& post, const DayTable& targets,
                                        int n_draws) {
  if (post.n_kept() < 1) throw InvalidArgument("downscaler predict: empty posterior");
  if (n_draws < 1) throw InvalidArgument("downscaler predict: n_draws must be positive");
  const int m = targets.n();
  const int kept = post.n_kept();
  const int n = static_cast<int>(post.train_locs.size());

  // evenly thinned sample selection
  const int take = std::min(n_draws, kept);
  std::vector<int> picks(take);
  for (int j = 0; j < take; ++j) {
    picks[j] = static_cast<int>(static_cast<long>(j) * kept / take);
  }

  const Eigen::MatrixXd dist = distance_matrix(post.train_locs);
  const Eigen::MatrixXd cross = cross_distance_matrix(targets.locs, post.train_locs);

  Rng rng(derive_seed(post.seed, 0x9D1C7));
  Eigen::MatrixXd draws(m, take);
  for (int j = 0; j < take; ++j) {
    const int s = picks[j];
    const double sigma02 = post.sill(s);
    const double tau = std::sqrt(post.nugget(s));
    const CorrelationState corr = correlation_state(dist, post.decay(s), false);
    const Eigen::VectorXd alpha = corr.llt.solve(post.intercept_field.col(s));
    const Eigen::MatrixXd r0 = (-post.decay(s) * cross.array()).exp().matrix();  // m x n
    const Eigen::MatrixXd b = corr.llt.solve(r0.transpose());                    // n x m
    for (int i = 0; i < m; ++i) {
      const double cond_mean = r0.row(i) * alpha;
      const double cond_var = std::max(0.0, sigma02 * (1.0 - r0.row(i) * b.col(i)));
      const double w0 = cond_mean + std::sqrt(cond_var) * rng.normal();
      draws(i, j) = post.beta0(s) + w0 + post.beta1(s) * targets.z(i) + tau * rng.normal();
    }
  }
  (void)n;

  DownscalerPrediction out;
  out.median.resize(m);
  out.lower95.resize(m);
  out.upper95.resize(m);
  out.variance.resize(m);
  std::vector<double> row(take);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < take; ++j) row[j] = draws(i, j);
    out.median(i) = quantile_type7(row, 0.5);
    out.lower95(i) = quantile_type7(row, 0.025);
    out.upper95(i) = quantile_type7(row, 0.975);
    out.variance(i) = sample_variance(draws.row(i).transpose());
  }
  return out;
}

}  // namespace airfuse
