#include "airfuse/ingest.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <set>

#include "airfuse/csv.hpp"
#include "airfuse/rng.hpp"

namespace airfuse {

namespace {

void expect_header(CsvReader& reader, const std::vector<std::string>& expected) {
  std::vector<std::string> fields;
  if (!reader.next(fields)) reader.fail("missing header");
  if (fields.size() < expected.size()) reader.fail("header has too few columns");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (fields[i] != expected[i]) {
      reader.fail("expected header column '" + expected[i] + "', got '" + fields[i] + "'");
    }
  }
}

}  // namespace

MonitorDataset load_monitor_csv(const std::string& path) {
  CsvReader reader(path);
  expect_header(reader, {"site_id", "lon", "lat", "urban", "date", "pm25"});

  struct Row {
    SiteId id;
    LonLat loc;
    bool urban;
    Date date;
    bool has_value;
    double value;
    long line;
  };
  std::vector<Row> rows;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != 6) reader.fail("expected 6 fields, got " + std::to_string(f.size()));
    Row r;
    r.line = reader.line();
    r.id = f[0];
    if (r.id.empty()) reader.fail("empty site_id");
    r.loc.lon = reader.parse_double(f[1], "lon");
    r.loc.lat = reader.parse_double(f[2], "lat");
    if (!is_valid(r.loc)) reader.fail("coordinate out of range");
    if (f[3] == "0") {
      r.urban = false;
    } else if (f[3] == "1") {
      r.urban = true;
    } else {
      reader.fail("urban flag must be 0 or 1, got '" + f[3] + "'");
    }
    try {
      r.date = parse_date(f[4]);
    } catch (const ParseError& e) {
      reader.fail(e.what());
    }
    r.has_value = !f[5].empty();
    r.value = 0.0;
    if (r.has_value) {
      r.value = reader.parse_double(f[5], "pm25");
      if (r.value < 0.0) reader.fail("negative pm25 value " + f[5]);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");

  // Site registry: first occurrence wins, later rows must agree on metadata.
  std::vector<Site> sites;
  std::unordered_map<SiteId, int> site_of;
  std::set<Date> dates;
  for (const Row& r : rows) {
    dates.insert(r.date);
    auto it = site_of.find(r.id);
    if (it == site_of.end()) {
      site_of.emplace(r.id, static_cast<int>(sites.size()));
      sites.push_back(Site{r.id, r.loc, r.urban});
    } else {
      const Site& s = sites[it->second];
      if (s.loc.lon != r.loc.lon || s.loc.lat != r.loc.lat || s.urban != r.urban) {
        throw ParseError(path + ": site '" + r.id + "' metadata differs from earlier rows", r.line);
      }
    }
  }
  std::vector<Date> days(dates.begin(), dates.end());
  std::unordered_map<long, int> day_of;
  for (int t = 0; t < static_cast<int>(days.size()); ++t) day_of[civil_days(days[t])] = t;

  MonitorDataset data(std::move(sites), std::move(days));
  for (const Row& r : rows) {
    if (!r.has_value) continue;
    const int site = site_of[r.id];
    const int day = day_of[civil_days(r.date)];
    if (data.has_observation(site, day)) {
      throw DuplicateKey(path + ": duplicate observation for site '" + r.id + "' on " +
                         format_date(r.date) + " (line " + std::to_string(r.line) + ")");
    }
    data.set_observation(site, day, r.value);
  }
  data.validate();
  return data;
}

GridGeometry load_grid_meta_csv(const std::string& path) {
  CsvReader reader(path);
  expect_header(reader, {"n_rows", "n_cols", "cell_km", "origin_lon", "origin_lat"});
  std::vector<std::string> f;
  if (!reader.next(f)) reader.fail("missing grid metadata row");
  if (f.size() != 5) reader.fail("expected 5 fields");
  const long nr = reader.parse_long(f[0], "n_rows");
  const long nc = reader.parse_long(f[1], "n_cols");
  const double cell = reader.parse_double(f[2], "cell_km");
  const double lon = reader.parse_double(f[3], "origin_lon");
  const double lat = reader.parse_double(f[4], "origin_lat");
  return GridGeometry(static_cast<int>(nr), static_cast<int>(nc), cell, LonLat{lon, lat});
}

GridDataset load_grid_csv(const std::string& meta_path, const std::string& grid_path) {
  const GridGeometry geom = load_grid_meta_csv(meta_path);
  CsvReader reader(grid_path);

  std::vector<std::string> header;
  if (!reader.next(header)) reader.fail("missing header");
  if (header.size() < 4 || header[0] != "row" || header[1] != "col" || header[2] != "date" ||
      header[3] != "cmaq") {
    reader.fail("header must start with row,col,date,cmaq");
  }
  std::vector<std::string> cov_names(header.begin() + 4, header.end());

  struct Cell {
    int row, col;
    double cmaq;
    Eigen::VectorXd covs;
  };
  std::set<Date> dates;
  std::vector<std::string> f;
  std::vector<std::pair<Date, Cell>> staged;
  while (reader.next(f)) {
    if (f.size() != header.size()) {
      reader.fail("expected " + std::to_string(header.size()) + " fields, got " +
                  std::to_string(f.size()));
    }
    Cell c;
    c.row = static_cast<int>(reader.parse_long(f[0], "row"));
    c.col = static_cast<int>(reader.parse_long(f[1], "col"));
    if (c.row < 0 || c.row >= geom.n_rows() || c.col < 0 || c.col >= geom.n_cols()) {
      reader.fail("cell index out of range");
    }
    Date d;
    try {
      d = parse_date(f[2]);
    } catch (const ParseError& e) {
      reader.fail(e.what());
    }
    c.cmaq = reader.parse_double(f[3], "cmaq");
    c.covs.resize(static_cast<Eigen::Index>(cov_names.size()));
    for (std::size_t j = 0; j < cov_names.size(); ++j) {
      c.covs(static_cast<Eigen::Index>(j)) = reader.parse_double(f[4 + j], cov_names[j]);
    }
    dates.insert(d);
    staged.emplace_back(d, std::move(c));
  }
  if (staged.empty()) throw ParseError(grid_path + ": no data rows");

  std::vector<Date> days(dates.begin(), dates.end());
  std::unordered_map<long, int> day_of;
  for (int t = 0; t < static_cast<int>(days.size()); ++t) day_of[civil_days(days[t])] = t;

  GridDataset grid(geom, days, cov_names);
  std::vector<bool> seen(static_cast<std::size_t>(geom.n_cells()) * days.size(), false);
  for (auto& [d, c] : staged) {
    const int day = day_of[civil_days(d)];
    const CellIndex idx{c.row, c.col};
    const std::size_t key = static_cast<std::size_t>(day) * geom.n_cells() + geom.flat_index(idx);
    if (seen[key]) {
      throw DuplicateKey(grid_path + ": duplicate grid row for cell (" + std::to_string(c.row) +
                         "," + std::to_string(c.col) + ") on " + format_date(d));
    }
    seen[key] = true;
    grid.set_model_output(idx, day, c.cmaq);
    for (int j = 0; j < grid.n_covariates(); ++j) grid.set_covariate(idx, day, j, c.covs(j));
  }
  for (bool s : seen) {
    if (!s) throw DataIntegrity(grid_path + ": grid file incomplete; every cell needs every date");
  }
  return grid;
}

void write_monitor_csv(const std::string& path, const MonitorDataset& data) {
  CsvWriter w(path);
  w.raw_line("site_id,lon,lat,urban,date,pm25");
  for (int i = 0; i < data.n_sites(); ++i) {
    const Site& s = data.site(i);
    for (int t = 0; t < data.n_days(); ++t) {
      const auto v = data.observation(i, t);
      w.row({s.id, format_full(s.loc.lon), format_full(s.loc.lat), s.urban ? "1" : "0",
             format_date(data.date(t)), v ? format_full(*v) : ""});
    }
  }
}

void write_grid_meta_csv(const std::string& path, const GridGeometry& geom) {
  CsvWriter w(path);
  w.raw_line("n_rows,n_cols,cell_km,origin_lon,origin_lat");
  w.row({std::to_string(geom.n_rows()), std::to_string(geom.n_cols()), format_full(geom.cell_km()),
         format_full(geom.origin().lon), format_full(geom.origin().lat)});
}

void write_grid_csv(const std::string& path, const GridDataset& grid) {
  CsvWriter w(path);
  std::string header = "row,col,date,cmaq";
  for (const auto& name : grid.covariate_names()) header += "," + name;
  w.raw_line(header);
  const GridGeometry& g = grid.geometry();
  std::vector<std::string> fields;
  for (int t = 0; t < grid.n_days(); ++t) {
    for (int idx = 0; idx < g.n_cells(); ++idx) {
      const CellIndex c = g.cell_from_flat(idx);
      fields.clear();
      fields.push_back(std::to_string(c.row));
      fields.push_back(std::to_string(c.col));
      fields.push_back(format_date(grid.date(t)));
      fields.push_back(format_full(grid.model_output(c, t)));
      for (int j = 0; j < grid.n_covariates(); ++j) {
        fields.push_back(format_full(grid.covariate(c, t, j)));
      }
      w.row(fields);
    }
  }
}

CellField regrid_fine_to_grid(std::span<const std::pair<LonLat, double>> points,
                              const GridGeometry& grid) {
  CellField out;
  out.value = Eigen::VectorXd::Zero(grid.n_cells());
  out.present.assign(grid.n_cells(), false);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(grid.n_cells());
  for (const auto& [loc, v] : points) {
    const auto cell = grid.try_link(loc);
    if (!cell) continue;
    const int idx = grid.flat_index(*cell);
    out.value(idx) += v;
    count(idx) += 1.0;
  }
  for (int idx = 0; idx < grid.n_cells(); ++idx) {
    if (count(idx) > 0.0) {
      out.value(idx) /= count(idx);
      out.present[idx] = true;
    }
  }
  return out;
}

Eigen::VectorXd regrid_coarse_to_grid(const GridGeometry& coarse, const Eigen::VectorXd& coarse_values,
                                      const GridGeometry& target) {
  if (coarse_values.size() != coarse.n_cells()) {
    throw InvalidArgument("regrid_coarse_to_grid: value count does not match coarse grid");
  }
  Eigen::VectorXd out(target.n_cells());
  for (int idx = 0; idx < target.n_cells(); ++idx) {
    const LonLat c = target.centroid(target.cell_from_flat(idx));
    double best = std::numeric_limits<double>::infinity();
    int best_idx = 0;
    for (int j = 0; j < coarse.n_cells(); ++j) {
      const double d = haversine_km(c, coarse.centroid(coarse.cell_from_flat(j)));
      if (d < best) {  // strict: ties keep the smaller lexicographic index
        best = d;
        best_idx = j;
      }
    }
    out(idx) = coarse_values(best_idx);
  }
  return out;
}

void SyntheticConfig::validate() const {
  if (n_sites < 3) throw InvalidArgument("synthetic: n_sites must be at least 3");
  if (n_days < 1) throw InvalidArgument("synthetic: n_days must be at least 1");
  if (grid_rows < 1 || grid_cols < 1) throw InvalidArgument("synthetic: grid dims must be positive");
  if (!(cell_km > 0.0)) throw InvalidArgument("synthetic: cell_km must be positive");
  if (nugget < 0.0 || partial_sill < 0.0) throw InvalidArgument("synthetic: variances must be non-negative");
  if (!(range_km > 0.0)) throw InvalidArgument("synthetic: range must be positive");
  if (day_constant_fraction < 0.0 || day_constant_fraction > 1.0) {
    throw InvalidArgument("synthetic: day_constant_fraction must be in [0,1]");
  }
  if (!is_valid_date(start_date)) throw InvalidArgument("synthetic: invalid start date");
}

namespace {

// Lower Cholesky factor of sigma2 * exp(-D/phi) with a small diagonal jitter.
Eigen::MatrixXd field_cholesky(const Eigen::MatrixXd& dist, double sigma2, double phi) {
  Eigen::MatrixXd cov = sigma2 * (-dist / phi).array().exp().matrix();
  cov.diagonal().array() += 1e-8 * sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("synthetic: field covariance not positive definite after jitter");
  }
  return llt.matrixL();
}

double smooth_field(double u, double v, double t, double phase, double amplitude) {
  constexpr double kTwoPi = 6.28318530717958647692;
  return amplitude * std::sin(kTwoPi * (u + 0.13 * t) + phase) *
         std::cos(kTwoPi * (0.8 * v - 0.07 * t) + 0.5 * phase);
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const GridGeometry geom(config.grid_rows, config.grid_cols, config.cell_km, config.origin);
  const double lon_span = geom.n_cols() * geom.cell_deg();
  const double lat_span = geom.n_rows() * geom.cell_deg();

  Rng site_rng(derive_seed(config.seed, 0xA11CE));
  std::vector<Site> sites;
  sites.reserve(config.n_sites);
  for (int i = 0; i < config.n_sites; ++i) {
    // keep a small interior margin so every site links to a cell
    const double lon = config.origin.lon + lon_span * (0.01 + 0.98 * site_rng.uniform());
    const double lat = config.origin.lat + lat_span * (0.01 + 0.98 * site_rng.uniform());
    sites.push_back(Site{"S" + std::to_string(i + 1), LonLat{lon, lat},
                         site_rng.uniform() < config.urban_fraction});
  }

  std::vector<Date> days;
  days.reserve(config.n_days);
  for (int t = 0; t < config.n_days; ++t) days.push_back(add_days(config.start_date, t));

  std::vector<std::string> cov_names;
  for (int j = 0; j < config.n_covariates(); ++j) cov_names.push_back("cov" + std::to_string(j + 1));

  MonitorDataset monitors(sites, days);
  GridDataset grid(geom, days, cov_names);

  // All field locations: sites first, then cell centroids.
  const int n_sites = config.n_sites;
  const int n_cells = geom.n_cells();
  const int n_pts = n_sites + n_cells;
  std::vector<LonLat> pts;
  pts.reserve(n_pts);
  for (const Site& s : sites) pts.push_back(s.loc);
  for (int idx = 0; idx < n_cells; ++idx) pts.push_back(geom.centroid(geom.cell_from_flat(idx)));
  const Eigen::MatrixXd dist = distance_matrix(pts);

  const double sill_static = config.day_constant_fraction * config.partial_sill;
  const double sill_daily = config.partial_sill - sill_static;

  Eigen::VectorXd static_field = Eigen::VectorXd::Zero(n_pts);
  if (sill_static > 0.0) {
    const Eigen::MatrixXd chol = field_cholesky(dist, sill_static, config.range_km);
    Rng rng(derive_seed(config.seed, 0x57A71C));
    Eigen::VectorXd zvec(n_pts);
    for (int i = 0; i < n_pts; ++i) zvec(i) = rng.normal();
    static_field = chol * zvec;
  }

  Eigen::MatrixXd daily_chol;
  if (sill_daily > 0.0) daily_chol = field_cholesky(dist, sill_daily, config.range_km);

  SyntheticTruth truth;
  truth.config = config;
  truth.site_field.resize(config.n_days);
  truth.cell_field.resize(config.n_days);

  for (int t = 0; t < config.n_days; ++t) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t) ^ 0xDA11ULL << 16));

    Eigen::VectorXd field = static_field;
    if (sill_daily > 0.0) {
      Eigen::VectorXd zvec(n_pts);
      for (int i = 0; i < n_pts; ++i) zvec(i) = rng.normal();
      field += daily_chol * zvec;
    }

    // Model output and covariates: smooth low-frequency surfaces plus noise.
    Eigen::VectorXd z_all(n_pts);
    Eigen::MatrixXd x_all(n_pts, config.n_covariates());
    for (int i = 0; i < n_pts; ++i) {
      const double u = (pts[i].lon - config.origin.lon) / lon_span;
      const double v = (pts[i].lat - config.origin.lat) / lat_span;
      z_all(i) = config.z_base + smooth_field(u, v, t, 0.0, config.z_amplitude) +
                 rng.normal(0.0, config.z_noise_sd);
      for (int j = 0; j < config.n_covariates(); ++j) {
        x_all(i, j) =
            smooth_field(u, v, t, 1.0 + 0.9 * j, 1.0) + rng.normal(0.0, config.covariate_noise_sd);
      }
    }

    // Grid values: cells take the field realization at their centroid.
    for (int idx = 0; idx < n_cells; ++idx) {
      const CellIndex c = geom.cell_from_flat(idx);
      grid.set_model_output(c, t, z_all(n_sites + idx));
      for (int j = 0; j < config.n_covariates(); ++j) {
        grid.set_covariate(c, t, j, x_all(n_sites + idx, j));
      }
    }

    // Observations: linked-cell mean structure + latent field + nugget noise.
    const double tau = std::sqrt(config.nugget);
    for (int i = 0; i < n_sites; ++i) {
      const CellIndex cell = geom.link(sites[i].loc);
      double mu = config.beta_intercept + config.beta_cmaq * grid.model_output(cell, t);
      for (int j = 0; j < config.n_covariates(); ++j) {
        mu += config.beta_covariates[j] * grid.covariate(cell, t, j);
      }
      const double eps = config.nugget > 0.0 ? rng.normal(0.0, tau) : 0.0;
      monitors.set_observation(i, t, mu + field(i) + eps);
    }

    truth.site_field[t] = field.head(n_sites);
    truth.cell_field[t] = field.tail(n_cells);
  }

  return SyntheticData{std::move(monitors), std::move(grid), std::move(truth)};
}

void write_truth_csv(const std::string& path, const SyntheticData& data) {
  CsvWriter w(path);
  w.raw_line("kind,index,date,field");
  for (int t = 0; t < data.monitors.n_days(); ++t) {
    const std::string date = format_date(data.monitors.date(t));
    const Eigen::VectorXd& sf = data.truth.site_field[t];
    for (Eigen::Index i = 0; i < sf.size(); ++i) {
      w.row({"site", data.monitors.site(static_cast<int>(i)).id, date, format_full(sf(i))});
    }
    const Eigen::VectorXd& cf = data.truth.cell_field[t];
    for (Eigen::Index i = 0; i < cf.size(); ++i) {
      w.row({"cell", std::to_string(i), date, format_full(cf(i))});
    }
  }
}

}  // namespace airfuse
