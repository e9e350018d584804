#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "airfuse/dataset.hpp"

namespace airfuse {

// monitors.csv: header `site_id,lon,lat,urban,date,pm25`; pm25 empty = missing.
MonitorDataset load_monitor_csv(const std::string& path);

// grid-meta.csv: header `n_rows,n_cols,cell_km,origin_lon,origin_lat` + one row.
GridGeometry load_grid_meta_csv(const std::string& path);

// grid.csv: header `row,col,date,cmaq,<covariate names...>`; every (cell, date)
// combination must be present exactly once.
GridDataset load_grid_csv(const std::string& meta_path, const std::string& grid_path);

void write_monitor_csv(const std::string& path, const MonitorDataset& data);
void write_grid_meta_csv(const std::string& path, const GridGeometry& geom);
void write_grid_csv(const std::string& path, const GridDataset& grid);

// Per-cell value with an explicit presence flag (no sentinel numbers).
struct CellField {
  Eigen::VectorXd value;                 // length n_cells, row-major flat order
  std::vector<bool> present;
};

// Cell value = mean of the point values linking to the cell; absent cells are
// flagged missing.
CellField regrid_fine_to_grid(std::span<const std::pair<LonLat, double>> points,
                              const GridGeometry& grid);

// Each target cell takes the value of the nearest (haversine) coarse-cell
// centroid; centroid ties resolve to the smaller (row, col) coarse index.
Eigen::VectorXd regrid_coarse_to_grid(const GridGeometry& coarse, const Eigen::VectorXd& coarse_values,
                                      const GridGeometry& target);

struct SyntheticConfig {
  int n_sites = 60;
  int n_days = 40;
  int grid_rows = 12;
  int grid_cols = 12;
  double cell_km = 25.0;
  LonLat origin{-100.0, 35.0};

  double beta_intercept = 1.0;
  double beta_cmaq = 0.8;
  std::vector<double> beta_covariates;  // one entry per generated covariate

  double nugget = 1.0;        // tau^2, independent site-day noise
  double partial_sill = 4.0;  // sigma^2 of the exponential field
  double range_km = 300.0;    // phi

  // Share of the partial sill held fixed across days (a persistent spatial
  // field drawn once); the per-day marginal distribution is unchanged.
  double day_constant_fraction = 0.0;

  double z_base = 30.0;    // level of the synthetic model output
  double z_amplitude = 6.0;
  double z_noise_sd = 0.5;
  double covariate_noise_sd = 0.3;
  double urban_fraction = 0.4;
  Date start_date{2011, 1, 1};
  std::uint64_t seed = 1;

  void validate() const;
  int n_covariates() const { return static_cast<int>(beta_covariates.size()); }
};

struct SyntheticTruth {
  SyntheticConfig config;
  // Latent spatial field (persistent + daily part) per day, at the generated
  // sites and at the grid cells.
  std::vector<Eigen::VectorXd> site_field;
  std::vector<Eigen::VectorXd> cell_field;
};

struct SyntheticData {
  MonitorDataset monitors;
  GridDataset grid;
  SyntheticTruth truth;
};

// Draws sites inside the grid extent, builds a smooth model-output field plus
// covariates, and on each day adds an exponential-covariance Gaussian field
// (exact Cholesky over sites and cells jointly) and nugget noise.
// Deterministic for a given seed; day t uses a seed derived as seed xor t.
SyntheticData generate_synthetic(const SyntheticConfig& config);

void write_truth_csv(const std::string& path, const SyntheticData& data);

}  // namespace airfuse
