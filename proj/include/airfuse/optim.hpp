#pragma once

#include <Eigen/Dense>
#include <functional>

namespace airfuse {

struct SimplexOptions {
  int max_evals = 400;
  double x_tol = 1e-10;   // simplex spread
  double f_tol = 1e-12;   // function spread
  double initial_step = 0.5;
};

struct SimplexResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evals = 0;
};

// Derivative-free Nelder-Mead minimizer. The returned point is the best one
// evaluated anywhere, including the starting point.
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& start, const SimplexOptions& opts = {});

}  // namespace airfuse
