#include "airfuse/ascii_grid.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "airfuse/csv.hpp"

namespace airfuse {

void write_ascii_grid(const std::string& path, const GridGeometry& geom,
                      const Eigen::VectorXd& values) {
  if (values.size() != geom.n_cells()) {
    throw InvalidArgument("ascii grid: value count does not match the grid");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "ncols " << geom.n_cols() << '\n';
  out << "nrows " << geom.n_rows() << '\n';
  out << "xllcorner " << format_full(geom.origin().lon) << '\n';
  out << "yllcorner " << format_full(geom.origin().lat) << '\n';
  out << "cellsize " << format_full(geom.cell_deg()) << '\n';
  out << "NODATA_value " << format_full(kAsciiGridNoData) << '\n';
  for (int r = geom.n_rows() - 1; r >= 0; --r) {  // north to south
    for (int c = 0; c < geom.n_cols(); ++c) {
      if (c) out << ' ';
      const double v = values(geom.flat_index({r, c}));
      out << format_full(std::isnan(v) ? kAsciiGridNoData : v);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

AsciiGrid read_ascii_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  int ncols = -1, nrows = -1;
  double xll = 0.0, yll = 0.0, cellsize = 0.0, nodata = kAsciiGridNoData;
  bool have_xll = false, have_yll = false, have_cell = false;
  std::string key;
  // six header lines: key value
  for (int i = 0; i < 6; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": truncated header");
    std::istringstream ls(line);
    double value;
    if (!(ls >> key >> value)) throw ParseError(path + ": malformed header line '" + line + "'");
    const std::string k = lower(key);
    if (k == "ncols") {
      ncols = static_cast<int>(value);
    } else if (k == "nrows") {
      nrows = static_cast<int>(value);
    } else if (k == "xllcorner") {
      xll = value;
      have_xll = true;
    } else if (k == "yllcorner") {
      yll = value;
      have_yll = true;
    } else if (k == "cellsize") {
      cellsize = value;
      have_cell = true;
    } else if (k == "nodata_value") {
      nodata = value;
    } else {
      throw ParseError(path + ": unknown header key '" + key + "'");
    }
  }
  if (ncols <= 0 || nrows <= 0 || !have_xll || !have_yll || !have_cell || !(cellsize > 0.0)) {
    throw ParseError(path + ": incomplete ESRI ASCII header");
  }

  AsciiGrid grid;
  grid.geom = GridGeometry(nrows, ncols, cellsize * kKmPerDegree, LonLat{xll, yll});
  grid.values.resize(nrows * ncols);
  for (int r = nrows - 1; r >= 0; --r) {
    for (int c = 0; c < ncols; ++c) {
      double v;
      if (!(in >> v)) throw ParseError(path + ": truncated value block");
      grid.values(grid.geom.flat_index({r, c})) =
          v == nodata ? std::numeric_limits<double>::quiet_NaN() : v;
    }
  }
  return grid;
}

}  // namespace airfuse
