#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace airfuse {

double mean(const Eigen::VectorXd& v);
// Sample variance (n-1 denominator); 0 for fewer than two values.
double sample_variance(const Eigen::VectorXd& v);
double sample_sd(const Eigen::VectorXd& v);

// Pearson correlation; nullopt when either side has zero variance or n < 2.
std::optional<double> pearson_correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Type-7 (linear interpolation) quantile, p in [0, 1]. Copies and sorts.
double quantile_type7(std::vector<double> values, double p);

// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Inverse standard normal CDF (Wichura AS241, double precision).
double normal_quantile(double p);

// Inverse Student-t CDF with nu degrees of freedom.
double student_t_quantile(double p, double nu);

}  // namespace airfuse
