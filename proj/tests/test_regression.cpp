#include "airfuse/regression.hpp"

#include <Eigen/Dense>

#include "airfuse/ingest.hpp"
#include "airfuse/rng.hpp"
#include "doctest.h"

using namespace airfuse;

namespace {

// Hand-built one-day table; covariates optional.
DayTable make_table(const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                    const Eigen::MatrixXd& x = {}, std::vector<std::string> names = {}) {
  DayTable t;
  t.day = 0;
  t.date = Date{2011, 1, 1};
  const int n = static_cast<int>(y.size());
  for (int i = 0; i < n; ++i) {
    t.locs.push_back({-100.0 + 0.1 * i, 40.0 + 0.05 * i});
    t.site_rows.push_back(i);
  }
  t.y = y;
  t.z = z;
  t.x = x.size() ? x : Eigen::MatrixXd::Zero(n, 0);
  t.covariate_names = std::move(names);
  return t;
}

}  // namespace

TEST_CASE("ols recovers an exact linear relationship") {
  Eigen::VectorXd z(5), y(5);
  z << 1, 2, 3, 4, 5;
  y = 2.0 + 3.0 * z.array();
  const DayTable t = make_table(y, z);
  const OlsFit fit = ols_fit_day(t, MeanSpec::cmaq_only());
  CHECK(fit.coefficients(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.coefficients(1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fit.residual_variance == doctest::Approx(0.0).epsilon(1e-20));

  const IntervalPrediction pred = ols_predict(fit, t);
  CHECK((pred.mean - y).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(pred.variance.maxCoeff() < 1e-18);
}

TEST_CASE("ols with constant response gives zero slope") {
  Eigen::VectorXd z(4), y(4);
  z << 1, 2, 3, 7;
  y.setConstant(5.5);
  const OlsFit fit = ols_fit_day(make_table(y, z), MeanSpec::cmaq_only());
  CHECK(fit.coefficients(0) == doctest::Approx(5.5).epsilon(1e-12));
  CHECK(fit.coefficients(1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ols three points match the explicit normal equations") {
  Eigen::VectorXd z(3), y(3);
  z << 0.0, 1.0, 3.0;
  y << 1.0, 2.5, 6.5;
  const DayTable t = make_table(y, z);
  const OlsFit fit = ols_fit_day(t, MeanSpec::cmaq_only());

  Eigen::MatrixXd x(3, 2);
  x.col(0).setOnes();
  x.col(1) = z;
  const Eigen::Matrix2d xtx = x.transpose() * x;
  const Eigen::Vector2d beta = xtx.inverse() * (x.transpose() * y);
  CHECK(fit.coefficients(0) == doctest::Approx(beta(0)).epsilon(1e-12));
  CHECK(fit.coefficients(1) == doctest::Approx(beta(1)).epsilon(1e-12));
}

TEST_CASE("ols prediction variance matches the leverage formula on 5 points") {
  Rng rng(3);
  Eigen::VectorXd z(5), y(5);
  for (int i = 0; i < 5; ++i) {
    z(i) = rng.uniform(0, 10);
    y(i) = 1.0 + 0.5 * z(i) + rng.normal();
  }
  const DayTable t = make_table(y, z);
  const OlsFit fit = ols_fit_day(t, MeanSpec::cmaq_only());

  Eigen::MatrixXd x(5, 2);
  x.col(0).setOnes();
  x.col(1) = z;
  const Eigen::Matrix2d xtx_inv = (x.transpose() * x).inverse();
  const double s2 = (y - x * fit.coefficients).squaredNorm() / 3.0;

  Eigen::VectorXd zt(2), yt(2);
  zt << 2.5, 11.0;
  yt.setZero();
  const DayTable targets = make_table(yt, zt);
  const IntervalPrediction pred = ols_predict(fit, targets);
  for (int i = 0; i < 2; ++i) {
    Eigen::Vector2d x0(1.0, zt(i));
    const double expected = s2 * (1.0 + x0.dot(xtx_inv * x0));
    CHECK(pred.variance(i) == doctest::Approx(expected).epsilon(1e-10));
  }
  CHECK(fit.residual_variance == doctest::Approx(s2).epsilon(1e-12));
}

TEST_CASE("ols residuals are orthogonal to the design") {
  Rng rng(9);
  const int n = 40;
  Eigen::VectorXd z(n), y(n);
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    z(i) = rng.uniform(0, 10);
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y(i) = 1 + 0.5 * z(i) + 0.3 * x(i, 0) - 0.7 * x(i, 1) + rng.normal();
  }
  const DayTable t = make_table(y, z, x, {"a", "b"});
  const MeanSpec spec = MeanSpec::cmaq_plus_covs({"a", "b"});
  const OlsFit fit = ols_fit_day(t, spec);
  const Eigen::MatrixXd design = design_matrix(t, spec);
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    CHECK(std::abs(design.col(j).dot(fit.residuals)) < 1e-8 * y.norm());
  }

  // adding a regressor never increases the training residual sum of squares
  const OlsFit smaller = ols_fit_day(t, MeanSpec::cmaq_only());
  CHECK(fit.residuals.squaredNorm() <= smaller.residuals.squaredNorm() + 1e-9);
}

TEST_CASE("ols error paths") {
  Eigen::VectorXd z(3), y(3);
  z << 1, 2, 3;
  y << 1, 2, 3;

  SUBCASE("too few observations") {
    Eigen::MatrixXd x(3, 2);
    x.col(0) << 1, 2, 4;
    x.col(1) << 2, 1, 0;
    const DayTable t = make_table(y, z, x, {"a", "b"});
    CHECK_THROWS_AS(ols_fit_day(t, MeanSpec::cmaq_plus_covs({"a", "b"})), InsufficientData);
  }

  SUBCASE("collinear design names the offending column") {
    Eigen::VectorXd z5(5), y5(5);
    z5 << 1, 2, 3, 4, 5;
    y5 << 2, 4, 5, 4, 5;
    Eigen::MatrixXd x(5, 1);
    x.col(0) = 2.0 * z5;  // exact duplicate of the cmaq column
    const DayTable t = make_table(y5, z5, x, {"dup"});
    try {
      ols_fit_day(t, MeanSpec::cmaq_plus_covs({"dup"}));
      FAIL("expected SingularDesign");
    } catch (const SingularDesign& e) {
      const std::string what = e.what();
      CHECK(what.find("collinear") != std::string::npos);
    }
  }

  SUBCASE("missing covariate") {
    const DayTable t = make_table(y, z);
    CHECK_THROWS_AS(design_matrix(t, MeanSpec::covs_only({"absent"})), MissingCovariate);
  }
}

namespace {

// Independent fixture: pooled rows where y depends on exactly two of six
// candidate covariates with no noise.
SyntheticData planted_two_of_six(double noise_sd, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_sites = 24;
  cfg.n_days = 12;
  cfg.grid_rows = cfg.grid_cols = 5;
  cfg.cell_km = 40.0;
  cfg.nugget = noise_sd * noise_sd;
  cfg.partial_sill = 0.0;
  cfg.beta_cmaq = 0.0;
  cfg.beta_intercept = 2.0;
  cfg.beta_covariates = {0.0, 1.5, 0.0, 0.0, -3.0, 0.0};  // cov2 and cov5 matter
  cfg.covariate_noise_sd = 0.6;
  cfg.seed = seed;
  if (noise_sd == 0.0) cfg.nugget = 0.0;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("best subset recovers a noiseless planted pair and stops at size 2") {
  const SyntheticData data = planted_two_of_six(0.0, 17);
  const auto candidates = data.grid.covariate_names();
  const BestSubsetResult sel =
      best_subset_select(data.monitors, data.grid, candidates, 6, 4, 11);

  CHECK(sel.chosen_size == 2);
  REQUIRE(sel.chosen.size() == 2);
  CHECK(((sel.chosen[0] == "cov2" && sel.chosen[1] == "cov5") ||
         (sel.chosen[0] == "cov5" && sel.chosen[1] == "cov2")));

  // independent exhaustive oracle over every pair, direct least squares
  Eigen::MatrixXd rows(data.monitors.n_sites() * data.monitors.n_days(), 6);
  Eigen::VectorXd y(rows.rows());
  long r = 0;
  for (int s = 0; s < data.monitors.n_sites(); ++s) {
    const CellIndex cell = data.grid.geometry().link(data.monitors.site(s).loc);
    for (int t = 0; t < data.monitors.n_days(); ++t) {
      for (int j = 0; j < 6; ++j) rows(r, j) = data.grid.covariate(cell, t, j);
      y(r) = *data.monitors.observation(s, t);
      ++r;
    }
  }
  double best_rss = std::numeric_limits<double>::infinity();
  std::pair<int, int> best_pair{-1, -1};
  for (int a = 0; a < 6; ++a) {
    for (int b = a + 1; b < 6; ++b) {
      Eigen::MatrixXd x(rows.rows(), 3);
      x.col(0).setOnes();
      x.col(1) = rows.col(a);
      x.col(2) = rows.col(b);
      const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
      const double rss = (y - x * beta).squaredNorm();
      if (rss < best_rss) {
        best_rss = rss;
        best_pair = {a, b};
      }
    }
  }
  CHECK(best_pair.first == 1);   // cov2
  CHECK(best_pair.second == 4);  // cov5
}

TEST_CASE("best subset with a single informative candidate picks size 1") {
  SyntheticConfig cfg;
  cfg.n_sites = 15;
  cfg.n_days = 8;
  cfg.grid_rows = cfg.grid_cols = 4;
  cfg.nugget = 0.01;
  cfg.partial_sill = 0.0;
  cfg.beta_cmaq = 0.0;
  cfg.beta_covariates = {2.0};
  cfg.seed = 23;
  const SyntheticData data = generate_synthetic(cfg);
  const BestSubsetResult sel =
      best_subset_select(data.monitors, data.grid, data.grid.covariate_names(), 1, 3, 5);
  CHECK(sel.chosen_size == 1);
  CHECK(sel.chosen == std::vector<std::string>{"cov1"});
}

TEST_CASE("best subset stopping rule fires early on pure noise") {
  SyntheticConfig cfg;
  cfg.n_sites = 40;
  cfg.n_days = 25;
  cfg.grid_rows = cfg.grid_cols = 5;
  cfg.nugget = 4.0;
  cfg.partial_sill = 0.0;
  cfg.beta_cmaq = 0.0;  // none of the covariates (nor cmaq) influence y
  cfg.beta_covariates = {0.0, 0.0, 0.0, 0.0, 0.0};
  cfg.seed = 31;
  const SyntheticData data = generate_synthetic(cfg);
  const BestSubsetResult sel =
      best_subset_select(data.monitors, data.grid, data.grid.covariate_names(), 5, 4, 7);
  CHECK(sel.chosen_size <= 1);
  // the curve is flat beyond the chosen point: no later size helps much
  for (std::size_t size = sel.chosen_size + 1; size < sel.cv_rmse.size(); ++size) {
    const double prev = sel.cv_rmse[size - 1];
    CHECK((prev - sel.cv_rmse[size]) / prev < 0.01);
  }
}

TEST_CASE("best subset determinism and budget") {
  const SyntheticData data = planted_two_of_six(0.5, 41);
  const auto candidates = data.grid.covariate_names();
  const BestSubsetResult a = best_subset_select(data.monitors, data.grid, candidates, 4, 3, 5);
  const BestSubsetResult b = best_subset_select(data.monitors, data.grid, candidates, 4, 3, 5);
  CHECK(a.chosen_size == b.chosen_size);
  CHECK(a.chosen == b.chosen);
  CHECK(a.cv_rmse == b.cv_rmse);

  std::vector<std::string> too_many(25, "x");
  for (int i = 0; i < 25; ++i) too_many[i] = "c" + std::to_string(i);
  CHECK_THROWS_AS(best_subset_select(data.monitors, data.grid, too_many, 25, 3, 5),
                  BudgetExceeded);
}
