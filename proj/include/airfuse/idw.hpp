#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "airfuse/dataset.hpp"

namespace airfuse {

struct IdwConfig {
  double phi = 2.0;                      // decay exponent, > 0
  std::optional<double> cutoff_km;       // weights beyond this radius are zero

  void validate() const;
};

// Inverse-distance-weighted prediction: weights (1/d)^phi normalized to sum
// to one, evaluated stably in log space. A target coinciding with training
// sites returns the mean of the co-located observations (the phi -> limit).
// Throws NoNeighbor when no training site lies within the cutoff.
double idw_predict(std::span<const LonLat> train_locs, const Eigen::VectorXd& train_values,
                   const LonLat& target, const IdwConfig& cfg);

struct IdwTuneResult {
  double best_phi = 0.0;
  std::vector<double> phi_grid;
  std::vector<double> rmse;    // pooled over all held-out site-days, per phi
  long skipped_records = 0;    // site-days with no active training site
};

// Site-level k-fold cross validation pooled over all days; ties prefer the
// smaller phi. The skipped-record set is phi-independent.
IdwTuneResult idw_tune_phi(const MonitorDataset& data, std::span<const double> phi_grid,
                           int k_folds, std::uint64_t seed,
                           std::optional<double> cutoff_km = std::nullopt);

inline const std::vector<double>& default_phi_grid() {
  static const std::vector<double> grid{0.5, 1.0, 2.0, 4.0, 8.0};
  return grid;
}

}  // namespace airfuse
