#include "airfuse/ingest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "airfuse/rng.hpp"
#include "airfuse/stats.hpp"
#include "doctest.h"

using namespace airfuse;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("airfuse_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("monitor csv loading") {
  TempDir dir;
  const std::string path = dir.file("monitors.csv");

  SUBCASE("two valid rows") {
    write_file(path,
               "site_id,lon,lat,urban,date,pm25\n"
               "A,-100.5,40.25,1,2011-01-01,12.5\n"
               "B,-99.5,41.0,0,2011-01-02,8.25\n");
    const MonitorDataset data = load_monitor_csv(path);
    CHECK(data.n_sites() == 2);
    CHECK(data.n_days() == 2);
    CHECK(data.n_observations() == 2);
    CHECK(*data.observation(0, 0) == 12.5);
    CHECK_FALSE(data.observation(0, 1).has_value());
    CHECK(data.site(0).urban);
  }

  SUBCASE("negative concentration names the line") {
    write_file(path,
               "site_id,lon,lat,urban,date,pm25\n"
               "A,-100.5,40.25,1,2011-01-01,12.5\n"
               "B,-99.5,41.0,0,2011-01-02,-3.0\n");
    try {
      load_monitor_csv(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }

  SUBCASE("duplicate site-day rejected") {
    write_file(path,
               "site_id,lon,lat,urban,date,pm25\n"
               "A,-100.5,40.25,1,2011-01-01,12.5\n"
               "A,-100.5,40.25,1,2011-01-01,11.0\n");
    CHECK_THROWS_AS(load_monitor_csv(path), DuplicateKey);
  }

  SUBCASE("empty pm25 is missing, not an error") {
    write_file(path,
               "site_id,lon,lat,urban,date,pm25\n"
               "A,-100.5,40.25,1,2011-01-01,\n"
               "A,-100.5,40.25,1,2011-01-02,4.0\n");
    const MonitorDataset data = load_monitor_csv(path);
    CHECK(data.n_observations() == 1);
  }

  SUBCASE("malformed numeric field names the line") {
    write_file(path,
               "site_id,lon,lat,urban,date,pm25\n"
               "A,not_a_number,40.25,1,2011-01-01,3.0\n");
    try {
      load_monitor_csv(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
}

TEST_CASE("grid csv loading and completeness") {
  TempDir dir;
  write_file(dir.file("meta.csv"),
             "n_rows,n_cols,cell_km,origin_lon,origin_lat\n"
             "2,2,50,-100,40\n");

  SUBCASE("round trip") {
    write_file(dir.file("grid.csv"),
               "row,col,date,cmaq,elev\n"
               "0,0,2011-01-01,10,1\n"
               "0,1,2011-01-01,11,2\n"
               "1,0,2011-01-01,12,3\n"
               "1,1,2011-01-01,13,4\n");
    const GridDataset grid = load_grid_csv(dir.file("meta.csv"), dir.file("grid.csv"));
    CHECK(grid.geometry().n_rows() == 2);
    CHECK(grid.model_output({1, 0}, 0) == 12.0);
    CHECK(grid.covariate({0, 1}, 0, 0) == 2.0);
  }

  SUBCASE("incomplete grid rejected") {
    write_file(dir.file("grid.csv"),
               "row,col,date,cmaq,elev\n"
               "0,0,2011-01-01,10,1\n"
               "0,1,2011-01-01,11,2\n"
               "1,0,2011-01-01,12,3\n");
    CHECK_THROWS_AS(load_grid_csv(dir.file("meta.csv"), dir.file("grid.csv")), DataIntegrity);
  }
}

TEST_CASE("fine-to-grid regridding") {
  const GridGeometry grid(2, 2, 50.0, {-100, 40});
  const LonLat c00 = grid.centroid({0, 0});
  const LonLat c01 = grid.centroid({0, 1});

  SUBCASE("single point passes through") {
    std::vector<std::pair<LonLat, double>> pts{{c00, 7.0}};
    const CellField field = regrid_fine_to_grid(pts, grid);
    CHECK(field.present[grid.flat_index({0, 0})]);
    CHECK(field.value(grid.flat_index({0, 0})) == 7.0);
  }

  SUBCASE("two points average; empty cells flagged missing") {
    std::vector<std::pair<LonLat, double>> pts{{c00, 3.0}, {c00, 5.0}, {c01, 9.0}};
    const CellField field = regrid_fine_to_grid(pts, grid);
    CHECK(field.value(grid.flat_index({0, 0})) == 4.0);
    CHECK(field.value(grid.flat_index({0, 1})) == 9.0);
    CHECK_FALSE(field.present[grid.flat_index({1, 0})]);
    CHECK_FALSE(field.present[grid.flat_index({1, 1})]);
  }

  SUBCASE("idempotent on centroid-placed points") {
    std::vector<std::pair<LonLat, double>> pts;
    Eigen::VectorXd values(grid.n_cells());
    for (int i = 0; i < grid.n_cells(); ++i) {
      values(i) = 1.0 + i;
      pts.emplace_back(grid.centroid(grid.cell_from_flat(i)), values(i));
    }
    const CellField once = regrid_fine_to_grid(pts, grid);
    CHECK((once.value - values).cwiseAbs().maxCoeff() == 0.0);
    std::vector<std::pair<LonLat, double>> again;
    for (int i = 0; i < grid.n_cells(); ++i) {
      again.emplace_back(grid.centroid(grid.cell_from_flat(i)), once.value(i));
    }
    const CellField twice = regrid_fine_to_grid(again, grid);
    CHECK((twice.value - once.value).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("coarse-to-grid regridding") {
  const GridGeometry target(2, 2, 40.0, {-100, 40});

  SUBCASE("identical grids copy through") {
    Eigen::VectorXd values(4);
    values << 1, 2, 3, 4;
    const Eigen::VectorXd out = regrid_coarse_to_grid(target, values, target);
    CHECK((out - values).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("single coarse cell broadcasts a constant") {
    const GridGeometry coarse(1, 1, 500.0, {-101, 39});
    Eigen::VectorXd one(1);
    one << 42.0;
    const Eigen::VectorXd out = regrid_coarse_to_grid(coarse, one, target);
    CHECK(out.minCoeff() == 42.0);
    CHECK(out.maxCoeff() == 42.0);
  }

  SUBCASE("equidistant centroids pick the lower coarse index") {
    // dyadic degree steps make the two candidate distances bit-identical:
    // coarse centroids at lon -0.125 and +0.125, the target centroid at 0
    const double step_km = 0.25 * kKmPerDegree;
    const GridGeometry coarse(1, 2, step_km, {-0.25, 0});
    const GridGeometry t1(1, 1, step_km, {-0.125, 0});
    REQUIRE(haversine_km(t1.centroid({0, 0}), coarse.centroid({0, 0})) ==
            haversine_km(t1.centroid({0, 0}), coarse.centroid({0, 1})));
    Eigen::VectorXd values(2);
    values << 5.0, 9.0;
    const Eigen::VectorXd out = regrid_coarse_to_grid(coarse, values, t1);
    CHECK(out(0) == 5.0);  // smaller (row, col) wins the tie
  }
}

TEST_CASE("synthetic generation") {
  SUBCASE("zero variances reproduce the deterministic mean") {
    SyntheticConfig cfg;
    cfg.n_sites = 10;
    cfg.n_days = 3;
    cfg.grid_rows = cfg.grid_cols = 4;
    cfg.nugget = 0.0;
    cfg.partial_sill = 0.0;
    cfg.beta_covariates = {0.5};
    cfg.seed = 11;
    const SyntheticData data = generate_synthetic(cfg);
    for (int s = 0; s < cfg.n_sites; ++s) {
      const CellIndex cell = data.grid.geometry().link(data.monitors.site(s).loc);
      for (int t = 0; t < cfg.n_days; ++t) {
        const double mu = cfg.beta_intercept + cfg.beta_cmaq * data.grid.model_output(cell, t) +
                          0.5 * data.grid.covariate(cell, t, 0);
        CHECK(*data.monitors.observation(s, t) == doctest::Approx(mu).epsilon(1e-12));
      }
    }
  }

  SUBCASE("pure nugget variance matches the law of large numbers") {
    SyntheticConfig cfg;
    cfg.n_sites = 100;
    cfg.n_days = 120;  // 12000 site-days
    cfg.grid_rows = cfg.grid_cols = 4;
    cfg.nugget = 1.0;
    cfg.partial_sill = 0.0;
    cfg.seed = 5;
    const SyntheticData data = generate_synthetic(cfg);
    double sse = 0.0;
    long n = 0;
    for (int s = 0; s < cfg.n_sites; ++s) {
      const CellIndex cell = data.grid.geometry().link(data.monitors.site(s).loc);
      for (int t = 0; t < cfg.n_days; ++t) {
        const double mu = cfg.beta_intercept + cfg.beta_cmaq * data.grid.model_output(cell, t);
        const double r = *data.monitors.observation(s, t) - mu;
        sse += r * r;
        ++n;
      }
    }
    CHECK(sse / n == doctest::Approx(1.0).epsilon(0.10));
  }

  SUBCASE("fixed seed is bit-identical") {
    SyntheticConfig cfg;
    cfg.n_sites = 8;
    cfg.n_days = 4;
    cfg.grid_rows = cfg.grid_cols = 3;
    cfg.beta_covariates = {0.1, -0.2};
    cfg.seed = 99;
    const SyntheticData a = generate_synthetic(cfg);
    const SyntheticData b = generate_synthetic(cfg);
    for (int s = 0; s < cfg.n_sites; ++s) {
      CHECK(a.monitors.site(s).loc.lon == b.monitors.site(s).loc.lon);
      for (int t = 0; t < cfg.n_days; ++t) {
        CHECK(*a.monitors.observation(s, t) == *b.monitors.observation(s, t));
      }
    }
    for (int t = 0; t < cfg.n_days; ++t) {
      CHECK((a.truth.cell_field[t] - b.truth.cell_field[t]).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("sample covariance across replicate days matches the field model") {
    SyntheticConfig cfg;
    cfg.n_sites = 5;
    cfg.n_days = 6000;
    cfg.grid_rows = cfg.grid_cols = 2;
    cfg.cell_km = 120.0;
    cfg.nugget = 0.5;
    cfg.partial_sill = 4.0;
    cfg.range_km = 300.0;
    cfg.seed = 21;
    const SyntheticData data = generate_synthetic(cfg);

    // residuals against the known mean isolate field + nugget
    auto residual = [&](int s, int t) {
      const CellIndex cell = data.grid.geometry().link(data.monitors.site(s).loc);
      return *data.monitors.observation(s, t) -
             (cfg.beta_intercept + cfg.beta_cmaq * data.grid.model_output(cell, t));
    };
    const double d01 = haversine_km(data.monitors.site(0).loc, data.monitors.site(1).loc);
    double m0 = 0.0, m1 = 0.0;
    for (int t = 0; t < cfg.n_days; ++t) {
      m0 += residual(0, t);
      m1 += residual(1, t);
    }
    m0 /= cfg.n_days;
    m1 /= cfg.n_days;
    double cov = 0.0, var0 = 0.0;
    for (int t = 0; t < cfg.n_days; ++t) {
      cov += (residual(0, t) - m0) * (residual(1, t) - m1);
      var0 += (residual(0, t) - m0) * (residual(0, t) - m0);
    }
    cov /= cfg.n_days - 1;
    var0 /= cfg.n_days - 1;

    const double expected_cov = cfg.partial_sill * std::exp(-d01 / cfg.range_km);
    const double expected_var = cfg.partial_sill + cfg.nugget;
    CHECK(cov == doctest::Approx(expected_cov).epsilon(0.05));
    CHECK(var0 == doctest::Approx(expected_var).epsilon(0.05));
  }

  SUBCASE("invalid configs are rejected") {
    SyntheticConfig cfg;
    cfg.n_sites = 2;
    CHECK_THROWS_AS(generate_synthetic(cfg), InvalidArgument);
    cfg.n_sites = 5;
    cfg.range_km = 0.0;
    CHECK_THROWS_AS(generate_synthetic(cfg), InvalidArgument);
  }
}

TEST_CASE("synthetic data round-trips through the csv formats") {
  TempDir dir;
  SyntheticConfig cfg;
  cfg.n_sites = 6;
  cfg.n_days = 3;
  cfg.grid_rows = cfg.grid_cols = 3;
  cfg.beta_covariates = {0.2};
  cfg.seed = 3;
  const SyntheticData data = generate_synthetic(cfg);

  write_monitor_csv(dir.file("monitors.csv"), data.monitors);
  write_grid_meta_csv(dir.file("grid-meta.csv"), data.grid.geometry());
  write_grid_csv(dir.file("grid.csv"), data.grid);

  const MonitorDataset monitors = load_monitor_csv(dir.file("monitors.csv"));
  const GridDataset grid = load_grid_csv(dir.file("grid-meta.csv"), dir.file("grid.csv"));

  REQUIRE(monitors.n_sites() == data.monitors.n_sites());
  REQUIRE(grid.n_days() == data.grid.n_days());
  for (int s = 0; s < monitors.n_sites(); ++s) {
    CHECK(monitors.site(s).loc.lon == data.monitors.site(s).loc.lon);
    for (int t = 0; t < monitors.n_days(); ++t) {
      CHECK(*monitors.observation(s, t) == *data.monitors.observation(s, t));
    }
  }
  for (int t = 0; t < grid.n_days(); ++t) {
    CHECK((grid.model_output_field(t) - data.grid.model_output_field(t)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK((grid.covariate_field(t) - data.grid.covariate_field(t)).cwiseAbs().maxCoeff() == 0.0);
  }
}
