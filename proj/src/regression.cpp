#include "airfuse/regression.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>

#include "airfuse/folds.hpp"
#include "airfuse/stats.hpp"

namespace airfuse {

MeanSpec MeanSpec::covs_only(std::vector<std::string> names) {
  if (names.empty()) throw InvalidArgument("mean spec: covariate list must not be empty");
  return {Kind::CovsOnly, std::move(names)};
}

MeanSpec MeanSpec::cmaq_plus_covs(std::vector<std::string> names) {
  if (names.empty()) throw InvalidArgument("mean spec: covariate list must not be empty");
  return {Kind::CmaqPlusCovs, std::move(names)};
}

int MeanSpec::n_regressors() const {
  return (uses_cmaq() ? 1 : 0) + (uses_covariates() ? static_cast<int>(covariates.size()) : 0);
}

std::string MeanSpec::label() const {
  switch (kind) {
    case Kind::CmaqOnly: return "cmaq";
    case Kind::CovsOnly: return "covs";
    case Kind::CmaqPlusCovs: return "both";
  }
  return "?";
}

std::vector<std::string> design_names(const MeanSpec& spec) {
  std::vector<std::string> names{"intercept"};
  if (spec.uses_cmaq()) names.push_back("cmaq");
  if (spec.uses_covariates()) {
    names.insert(names.end(), spec.covariates.begin(), spec.covariates.end());
  }
  return names;
}

Eigen::MatrixXd design_matrix(const DayTable& table, const MeanSpec& spec) {
  const int n = table.n();
  const int q = 1 + spec.n_regressors();
  Eigen::MatrixXd x(n, q);
  x.col(0).setOnes();
  int col = 1;
  if (spec.uses_cmaq()) x.col(col++) = table.z;
  if (spec.uses_covariates()) {
    for (const std::string& name : spec.covariates) {
      int idx = -1;
      for (int j = 0; j < static_cast<int>(table.covariate_names.size()); ++j) {
        if (table.covariate_names[j] == name) {
          idx = j;
          break;
        }
      }
      if (idx < 0) throw MissingCovariate("design: covariate '" + name + "' not in table");
      x.col(col++) = table.x.col(idx);
    }
  }
  return x;
}

OlsFit ols_fit_day(const DayTable& day, const MeanSpec& spec) {
  const int n = day.n();
  const int q = 1 + spec.n_regressors();
  if (n <= spec.n_regressors() + 1) {
    throw InsufficientData("ols: day " + std::to_string(day.day) + " has " + std::to_string(n) +
                           " observations for " + std::to_string(spec.n_regressors()) +
                           " regressors");
  }
  const Eigen::MatrixXd x = design_matrix(day, spec);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < q) {
    const auto names = design_names(spec);
    const auto perm = qr.colsPermutation().indices();
    std::string bad;
    for (int i = qr.rank(); i < q; ++i) {
      if (!bad.empty()) bad += ", ";
      bad += names[perm(i)];
    }
    throw SingularDesign("ols: rank-deficient design on day " + std::to_string(day.day) +
                         "; collinear columns: " + bad);
  }

  OlsFit fit;
  fit.day = day.day;
  fit.spec = spec;
  fit.n_train = n;
  fit.coefficients = qr.solve(day.y);
  fit.residuals = day.y - x * fit.coefficients;
  const double rss = fit.residuals.squaredNorm();
  fit.residual_variance = rss / static_cast<double>(n - q);
  fit.xtx_inverse = (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(q, q));
  return fit;
}

IntervalPrediction ols_predict(const OlsFit& fit, const DayTable& targets) {
  const Eigen::MatrixXd x0 = design_matrix(targets, fit.spec);
  const int m = static_cast<int>(x0.rows());
  IntervalPrediction out;
  out.mean = x0 * fit.coefficients;
  out.variance.resize(m);
  for (int i = 0; i < m; ++i) {
    const double lev = x0.row(i) * fit.xtx_inverse * x0.row(i).transpose();
    out.variance(i) = std::max(0.0, fit.residual_variance * (1.0 + lev));
  }
  const double tq = fit.df() > 0 ? student_t_quantile(0.975, fit.df()) : 1.96;
  out.lower95 = out.mean - tq * out.variance.cwiseSqrt();
  out.upper95 = out.mean + tq * out.variance.cwiseSqrt();
  return out;
}

namespace {

// Pooled site-day regression rows for subset selection.
struct PooledRows {
  Eigen::MatrixXd x;          // n x p candidate columns
  Eigen::VectorXd y;
  std::vector<int> site_row;  // site index per row
};

PooledRows pool_rows(const MonitorDataset& monitors, const GridDataset& grid,
                     std::span<const std::string> candidates) {
  std::vector<int> cov_idx;
  for (const auto& name : candidates) {
    const auto idx = grid.covariate_index(name);
    if (!idx) throw MissingCovariate("best subset: covariate '" + name + "' not in grid");
    cov_idx.push_back(*idx);
  }
  const long n = monitors.n_observations();
  PooledRows rows;
  rows.x.resize(n, static_cast<Eigen::Index>(cov_idx.size()));
  rows.y.resize(n);
  rows.site_row.reserve(n);
  long r = 0;
  for (int i = 0; i < monitors.n_sites(); ++i) {
    const CellIndex cell = grid.geometry().link(monitors.site(i).loc);
    for (int t = 0; t < monitors.n_days(); ++t) {
      const auto v = monitors.observation(i, t);
      if (!v) continue;
      rows.y(r) = *v;
      for (std::size_t j = 0; j < cov_idx.size(); ++j) {
        rows.x(r, static_cast<Eigen::Index>(j)) = grid.covariate(cell, t, cov_idx[j]);
      }
      rows.site_row.push_back(i);
      ++r;
    }
  }
  return rows;
}

// Exhaustive subset enumeration on centered data via an incrementally grown
// Cholesky factor of the subset Gram matrix. Tracks, for every size, the
// subset with minimum residual sum of squares.
class SubsetSearch {
public:
  SubsetSearch(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int max_size)
      : max_size_(max_size), p_(static_cast<int>(x.cols())) {
    x_mean_ = x.colwise().mean();
    y_mean_ = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x_mean_;
    const Eigen::VectorXd yc = y.array() - y_mean_;
    gram_ = xc.transpose() * xc;
    xty_ = xc.transpose() * yc;
    syy_ = yc.squaredNorm();

    best_rss_.assign(max_size_ + 1, std::numeric_limits<double>::infinity());
    best_subset_.assign(max_size_ + 1, {});
    best_rss_[0] = syy_;

    chol_.setZero(max_size_, max_size_);
    zvec_.setZero(max_size_);
    members_.reserve(max_size_);
    dfs(0, 0.0);
  }

  // Centered-scale coefficients and intercept for the best subset of a size.
  struct SubsetFit {
    std::vector<int> columns;
    Eigen::VectorXd slopes;
    double intercept = 0.0;
    double rss = 0.0;
  };

  double best_rss(int size) const { return best_rss_[size]; }
  const std::vector<int>& best_subset(int size) const { return best_subset_[size]; }
  bool has_size(int size) const { return std::isfinite(best_rss_[size]); }

  SubsetFit refit(const std::vector<int>& columns) const {
    const int m = static_cast<int>(columns.size());
    SubsetFit fit;
    fit.columns = columns;
    if (m == 0) {
      fit.intercept = y_mean_;
      fit.rss = syy_;
      return fit;
    }
    Eigen::MatrixXd g(m, m);
    Eigen::VectorXd b(m);
    for (int a = 0; a < m; ++a) {
      b(a) = xty_(columns[a]);
      for (int c = 0; c < m; ++c) g(a, c) = gram_(columns[a], columns[c]);
    }
    fit.slopes = g.ldlt().solve(b);
    fit.rss = std::max(0.0, syy_ - fit.slopes.dot(b));
    fit.intercept = y_mean_;
    for (int a = 0; a < m; ++a) fit.intercept -= fit.slopes(a) * x_mean_(columns[a]);
    return fit;
  }

private:
  void dfs(int first, double ess) {
    const int depth = static_cast<int>(members_.size());
    if (depth >= max_size_) return;
    for (int j = first; j < p_; ++j) {
      // grow the Cholesky factor by column j
      Eigen::VectorXd w(depth);
      for (int a = 0; a < depth; ++a) {
        double s = gram_(members_[a], j);
        for (int c = 0; c < a; ++c) s -= chol_(a, c) * w(c);
        w(a) = s / chol_(a, a);
      }
      const double d = gram_(j, j) - w.squaredNorm();
      if (d <= 1e-10 * std::max(gram_(j, j), 1e-300)) continue;  // collinear extension
      const double l = std::sqrt(d);
      double zj = xty_(j);
      for (int c = 0; c < depth; ++c) zj -= w(c) * zvec_(c);
      zj /= l;

      chol_.row(depth).head(depth) = w.transpose();
      chol_(depth, depth) = l;
      zvec_(depth) = zj;
      members_.push_back(j);

      const double new_ess = ess + zj * zj;
      const double rss = std::max(0.0, syy_ - new_ess);
      const int size = depth + 1;
      if (rss < best_rss_[size]) {
        best_rss_[size] = rss;
        best_subset_[size] = members_;
      }
      dfs(j + 1, new_ess);
      members_.pop_back();
    }
  }

  int max_size_;
  int p_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd xty_;
  Eigen::RowVectorXd x_mean_;
  double y_mean_ = 0.0;
  double syy_ = 0.0;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd zvec_;
  std::vector<int> members_;
  std::vector<double> best_rss_;
  std::vector<std::vector<int>> best_subset_;
};

}  // namespace

BestSubsetResult best_subset_select(const MonitorDataset& monitors, const GridDataset& grid,
                                    std::span<const std::string> candidates, int max_size,
                                    int k_folds, std::uint64_t seed) {
  const int p = static_cast<int>(candidates.size());
  if (p == 0) throw InvalidArgument("best subset: no candidate predictors");
  if (p > 24) {
    throw BudgetExceeded("best subset: " + std::to_string(p) +
                         " candidates exceeds the exhaustive budget of 24");
  }
  max_size = std::clamp(max_size, 1, p);

  const PooledRows rows = pool_rows(monitors, grid, candidates);
  const long n = rows.y.size();
  if (n <= max_size + 1) throw InsufficientData("best subset: too few pooled observations");

  const FoldPlan plan = make_site_folds(monitors.n_sites(), k_folds, seed);

  // Stage 1: per-fold subset search on training rows, per-size holdout RMSE.
  std::vector<std::vector<double>> fold_rmse(k_folds);
  for (int f = 0; f < k_folds; ++f) {
    std::vector<long> train_rows, test_rows;
    for (long r = 0; r < n; ++r) {
      (plan.fold_of_site[rows.site_row[r]] == f ? test_rows : train_rows).push_back(r);
    }
    if (train_rows.size() <= static_cast<std::size_t>(max_size + 1) || test_rows.empty()) {
      throw InsufficientData("best subset: fold " + std::to_string(f) + " is too small");
    }
    Eigen::MatrixXd xtr(train_rows.size(), p);
    Eigen::VectorXd ytr(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      xtr.row(i) = rows.x.row(train_rows[i]);
      ytr(i) = rows.y(train_rows[i]);
    }
    SubsetSearch search(xtr, ytr, max_size);

    fold_rmse[f].assign(max_size + 1, std::numeric_limits<double>::quiet_NaN());
    for (int size = 0; size <= max_size; ++size) {
      if (size > 0 && !search.has_size(size)) break;
      const auto fit = search.refit(size == 0 ? std::vector<int>{} : search.best_subset(size));
      double sse = 0.0;
      for (long r : test_rows) {
        double pred = fit.intercept;
        for (std::size_t a = 0; a < fit.columns.size(); ++a) {
          pred += fit.slopes(a) * rows.x(r, fit.columns[a]);
        }
        const double e = pred - rows.y(r);
        sse += e * e;
      }
      fold_rmse[f][size] = std::sqrt(sse / static_cast<double>(test_rows.size()));
    }
  }

  BestSubsetResult result;
  result.cv_rmse.assign(max_size + 1, std::numeric_limits<double>::quiet_NaN());
  for (int size = 0; size <= max_size; ++size) {
    double sum = 0.0;
    bool ok = true;
    for (int f = 0; f < k_folds; ++f) {
      if (std::isnan(fold_rmse[f][size])) {
        ok = false;
        break;
      }
      sum += fold_rmse[f][size];
    }
    if (ok) result.cv_rmse[size] = sum / k_folds;
  }

  // Stopping rule: grow while a size improves the CV RMSE by at least 0.1%
  // relative to the previous size; an (essentially) exact fit cannot improve.
  int chosen = max_size;
  const double exact_floor = 1e-12 * std::max(1.0, result.cv_rmse[0]);
  for (int size = 1; size <= max_size; ++size) {
    if (std::isnan(result.cv_rmse[size])) {
      chosen = size - 1;
      break;
    }
    const double prev = result.cv_rmse[size - 1];
    const double improvement = prev <= exact_floor ? 0.0 : (prev - result.cv_rmse[size]) / prev;
    if (improvement < 0.001) {
      chosen = size - 1;
      break;
    }
  }
  result.chosen_size = chosen;

  // Stage 2: re-search on the full data; report the best subset of every size.
  SubsetSearch full(rows.x, rows.y, max_size);
  result.best_by_size.resize(max_size + 1);
  for (int size = 1; size <= max_size; ++size) {
    if (!full.has_size(size)) break;
    for (int c : full.best_subset(size)) {
      result.best_by_size[size].push_back(candidates[c]);
    }
  }
  result.chosen = result.best_by_size[chosen];
  return result;
}

}  // namespace airfuse
