#pragma once

#include <Eigen/Dense>
#include <string>

#include "airfuse/geo.hpp"

namespace airfuse {

inline constexpr double kAsciiGridNoData = -9999.0;

// ESRI ASCII grid. Values are flat row-major from the south-west cell (the
// library's cell order); the file itself stores rows north to south. NaN
// entries become the NODATA value. cellsize is written in degrees.
void write_ascii_grid(const std::string& path, const GridGeometry& geom,
                      const Eigen::VectorXd& values);

struct AsciiGrid {
  GridGeometry geom;
  Eigen::VectorXd values;  // flat row-major from the south-west cell, NODATA -> NaN
};

AsciiGrid read_ascii_grid(const std::string& path);

}  // namespace airfuse
