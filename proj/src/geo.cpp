#include "airfuse/geo.hpp"

#include <cmath>

namespace airfuse {

namespace {
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
}

bool is_valid(const LonLat& p) {
  return std::isfinite(p.lon) && std::isfinite(p.lat) && p.lon >= -180.0 && p.lon <= 180.0 &&
         p.lat >= -90.0 && p.lat <= 90.0;
}

void validate_coordinate(const LonLat& p) {
  if (!is_valid(p)) {
    throw InvalidCoordinate("coordinate out of range: lon=" + std::to_string(p.lon) +
                            " lat=" + std::to_string(p.lat));
  }
}

double haversine_km(const LonLat& a, const LonLat& b) {
  validate_coordinate(a);
  validate_coordinate(b);
  const double lat1 = a.lat * kDegToRad;
  const double lat2 = b.lat * kDegToRad;
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  const double s1 = std::sin(0.5 * dlat);
  const double s2 = std::sin(0.5 * dlon);
  const double h = s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

Eigen::MatrixXd distance_matrix(std::span<const LonLat> points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = haversine_km(points[i], points[j]);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Eigen::MatrixXd cross_distance_matrix(std::span<const LonLat> a, std::span<const LonLat> b) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      d(i, j) = haversine_km(a[i], b[j]);
    }
  }
  return d;
}

GridGeometry::GridGeometry(int n_rows, int n_cols, double cell_km, LonLat origin)
    : n_rows_(n_rows), n_cols_(n_cols), cell_km_(cell_km), cell_deg_(cell_km / kKmPerDegree), origin_(origin) {
  if (n_rows <= 0 || n_cols <= 0) throw InvalidArgument("grid: dimensions must be positive");
  if (!(cell_km > 0.0)) throw InvalidArgument("grid: cell size must be positive");
  validate_coordinate(origin);
  const LonLat far{origin.lon + n_cols * cell_deg_, origin.lat + n_rows * cell_deg_};
  if (!is_valid(far)) throw InvalidArgument("grid: extent leaves valid coordinate range");
}

LonLat GridGeometry::centroid(CellIndex c) const {
  if (c.row < 0 || c.row >= n_rows_ || c.col < 0 || c.col >= n_cols_) {
    throw InvalidArgument("grid: cell index out of range");
  }
  return {origin_.lon + (c.col + 0.5) * cell_deg_, origin_.lat + (c.row + 0.5) * cell_deg_};
}

bool GridGeometry::contains(const LonLat& p) const { return try_link(p).has_value(); }

std::optional<CellIndex> GridGeometry::try_link(const LonLat& p) const {
  validate_coordinate(p);
  if (n_rows_ == 0) return std::nullopt;
  const double u = (p.lon - origin_.lon) / cell_deg_;
  const double v = (p.lat - origin_.lat) / cell_deg_;
  if (u < 0.0 || v < 0.0 || u > n_cols_ || v > n_rows_) return std::nullopt;
  // floor, with exact edges resolved toward the smaller index
  auto edge_index = [](double t, int n) {
    int idx = static_cast<int>(std::floor(t));
    if (t == std::floor(t) && idx > 0) idx -= 1;  // shared edge: take lower cell
    if (idx >= n) idx = n - 1;                    // outer boundary
    return idx;
  };
  return CellIndex{edge_index(v, n_rows_), edge_index(u, n_cols_)};
}

CellIndex GridGeometry::link(const LonLat& p) const {
  auto c = try_link(p);
  if (!c) {
    throw OutOfDomain("point (" + std::to_string(p.lon) + ", " + std::to_string(p.lat) +
                      ") lies outside the grid extent");
  }
  return *c;
}

}  // namespace airfuse
