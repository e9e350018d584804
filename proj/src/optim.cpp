#include "airfuse/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace airfuse {

SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& start, const SimplexOptions& opts) {
  const int n = static_cast<int>(start.size());
  SimplexResult best;
  best.x = start;
  best.value = std::numeric_limits<double>::infinity();
  int evals = 0;

  auto eval = [&](const Eigen::VectorXd& x) {
    double v = f(x);
    if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
    ++evals;
    if (v < best.value) {
      best.value = v;
      best.x = x;
    }
    return v;
  };

  std::vector<Eigen::VectorXd> pts(n + 1, start);
  std::vector<double> vals(n + 1);
  for (int i = 1; i <= n; ++i) pts[i](i - 1) += opts.initial_step;
  for (int i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

  constexpr double kAlpha = 1.0, kGamma = 2.0, kRho = 0.5, kSigma = 0.5;

  while (evals < opts.max_evals) {
    std::vector<int> order(n + 1);
    for (int i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
    std::vector<Eigen::VectorXd> p2(n + 1);
    std::vector<double> v2(n + 1);
    for (int i = 0; i <= n; ++i) {
      p2[i] = pts[order[i]];
      v2[i] = vals[order[i]];
    }
    pts.swap(p2);
    vals.swap(v2);

    double spread = 0.0;
    for (int i = 1; i <= n; ++i) spread = std::max(spread, (pts[i] - pts[0]).cwiseAbs().maxCoeff());
    const double fspread = std::isfinite(vals[n]) ? vals[n] - vals[0] : 1.0;
    if (spread < opts.x_tol && fspread < opts.f_tol) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += pts[i];
    centroid /= n;

    const Eigen::VectorXd reflected = centroid + kAlpha * (centroid - pts[n]);
    const double fr = eval(reflected);
    if (fr < vals[0]) {
      const Eigen::VectorXd expanded = centroid + kGamma * (reflected - centroid);
      const double fe = eval(expanded);
      if (fe < fr) {
        pts[n] = expanded;
        vals[n] = fe;
      } else {
        pts[n] = reflected;
        vals[n] = fr;
      }
    } else if (fr < vals[n - 1]) {
      pts[n] = reflected;
      vals[n] = fr;
    } else {
      const Eigen::VectorXd contracted = centroid + kRho * (pts[n] - centroid);
      const double fc = eval(contracted);
      if (fc < vals[n]) {
        pts[n] = contracted;
        vals[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          pts[i] = pts[0] + kSigma * (pts[i] - pts[0]);
          vals[i] = eval(pts[i]);
        }
      }
    }
  }

  best.evals = evals;
  return best;
}

}  // namespace airfuse
