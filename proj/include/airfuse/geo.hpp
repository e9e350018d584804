#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>

#include "airfuse/error.hpp"

namespace airfuse {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kKmPerMile = 1.609344;
// Kilometres per degree of latitude (and of longitude at the equator).
inline constexpr double kKmPerDegree = kEarthRadiusKm * 3.14159265358979323846 / 180.0;

// Geographic coordinate in degrees; lon in [-180, 180], lat in [-90, 90].
struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
};

bool is_valid(const LonLat& p);
void validate_coordinate(const LonLat& p);  // throws InvalidCoordinate

// Great-circle distance in km (haversine, spherical Earth R = 6371 km).
double haversine_km(const LonLat& a, const LonLat& b);

inline double miles_from_km(double km) { return km / kKmPerMile; }
inline double km_from_miles(double miles) { return miles * kKmPerMile; }

// Symmetric pairwise great-circle distance matrix in km.
Eigen::MatrixXd distance_matrix(std::span<const LonLat> points);
// Rectangular distance matrix, rows index `a`, columns index `b`.
Eigen::MatrixXd cross_distance_matrix(std::span<const LonLat> a, std::span<const LonLat> b);

struct CellIndex {
  int row = 0;
  int col = 0;
  bool operator==(const CellIndex&) const = default;
};

// Rectangular cell grid anchored at a southwest corner. The nominal cell size
// is given in km and converted to a fixed step in degrees (both axes), so the
// grid is rectangular in lon/lat space. Row 0 is the southernmost row.
class GridGeometry {
public:
  GridGeometry() = default;
  GridGeometry(int n_rows, int n_cols, double cell_km, LonLat origin);

  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  int n_cells() const { return n_rows_ * n_cols_; }
  double cell_km() const { return cell_km_; }
  double cell_deg() const { return cell_deg_; }
  const LonLat& origin() const { return origin_; }

  LonLat centroid(CellIndex c) const;
  bool contains(const LonLat& p) const;

  // Cell whose extent contains p. Points on a shared interior edge resolve to
  // the smaller (row, col); points on the outer north/east boundary belong to
  // the last row/column. Returns nullopt outside the grid extent.
  std::optional<CellIndex> try_link(const LonLat& p) const;
  CellIndex link(const LonLat& p) const;  // throws OutOfDomain

  int flat_index(CellIndex c) const { return c.row * n_cols_ + c.col; }
  CellIndex cell_from_flat(int idx) const { return {idx / n_cols_, idx % n_cols_}; }

  bool operator==(const GridGeometry&) const = default;

private:
  int n_rows_ = 0;
  int n_cols_ = 0;
  double cell_km_ = 0.0;
  double cell_deg_ = 0.0;
  LonLat origin_;
};

}  // namespace airfuse
