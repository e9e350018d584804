#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "airfuse/geo.hpp"

namespace airfuse {

// Opaque monitor key, unique within a dataset.
using SiteId = std::string;

struct Date {
  int year = 0;
  int month = 0;  // 1..12
  int day = 0;    // 1..31
  bool operator==(const Date&) const = default;
  auto operator<=>(const Date&) const = default;
};

bool is_valid_date(const Date& d);
Date parse_date(std::string_view iso);  // "YYYY-MM-DD"
std::string format_date(const Date& d);
long civil_days(const Date& d);  // serial day count, for date arithmetic
Date add_days(const Date& d, int days);
int day_of_year(const Date& d);  // 1..366

enum class Season { Winter, Spring, Summer, Fall };
Season season_of(const Date& d);
std::string season_name(Season s);

struct Site {
  SiteId id;
  LonLat loc;
  bool urban = false;
};

// Per-site, per-day observations with an explicit presence mask. Day indices
// are 0-based positions into the date axis; immutable once validated.
class MonitorDataset {
public:
  MonitorDataset() = default;
  MonitorDataset(std::vector<Site> sites, std::vector<Date> days);

  void set_observation(int site, int day, double value);

  int n_sites() const { return static_cast<int>(sites_.size()); }
  int n_days() const { return static_cast<int>(days_.size()); }
  const std::vector<Site>& sites() const { return sites_; }
  const Site& site(int i) const { return sites_.at(i); }
  const std::vector<Date>& days() const { return days_; }
  const Date& date(int day) const { return days_.at(day); }

  std::optional<int> find_site(const SiteId& id) const;
  std::optional<int> find_day(const Date& d) const;

  bool has_observation(int site, int day) const;
  std::optional<double> observation(int site, int day) const;
  // Sites with an observation on the given day, ascending site index.
  std::vector<int> active_sites(int day) const;
  long n_observations() const;

  // Checks the documented invariants; throws on violation.
  void validate() const;

private:
  std::vector<Site> sites_;
  std::vector<Date> days_;
  std::unordered_map<SiteId, int> site_index_;
  Eigen::MatrixXd values_;                    // n_sites x n_days
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> present_;
};

// Dataset restricted to a subset of site indices (observations copied).
MonitorDataset restrict_sites(const MonitorDataset& data, std::span<const int> keep);

struct ActiveSiteStats {
  int count_within = 0;        // active sites strictly inside the radius
  double nearest_miles = 0.0;  // +infinity when no active site exists
};

// Count of active sites strictly within `radius_miles` of `target` on `day`,
// and the distance (miles) to the nearest active site. `exclude_site` removes
// the queried monitor itself so the result describes *other* stations.
ActiveSiteStats active_site_stats(const MonitorDataset& data, int day, const LonLat& target,
                                  double radius_miles = 50.0,
                                  std::optional<int> exclude_site = std::nullopt);

// Gridded model output plus named covariates on a shared cell grid and date
// axis. Complete by construction: every cell has a value on every day.
class GridDataset {
public:
  GridDataset() = default;
  GridDataset(GridGeometry geom, std::vector<Date> days, std::vector<std::string> covariate_names);

  const GridGeometry& geometry() const { return geom_; }
  int n_days() const { return static_cast<int>(days_.size()); }
  const std::vector<Date>& days() const { return days_; }
  const Date& date(int day) const { return days_.at(day); }
  std::optional<int> find_day(const Date& d) const;

  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  int n_covariates() const { return static_cast<int>(covariate_names_.size()); }
  std::optional<int> covariate_index(const std::string& name) const;

  double model_output(CellIndex c, int day) const;
  void set_model_output(CellIndex c, int day, double v);
  double covariate(CellIndex c, int day, int cov) const;
  void set_covariate(CellIndex c, int day, int cov, double v);
  Eigen::VectorXd covariate_row(CellIndex c, int day) const;

  // Flat per-cell views (cell order: row-major from the south-west corner).
  const Eigen::VectorXd& model_output_field(int day) const { return cmaq_.at(day); }
  const Eigen::MatrixXd& covariate_field(int day) const { return covs_.at(day); }

private:
  GridGeometry geom_;
  std::vector<Date> days_;
  std::vector<std::string> covariate_names_;
  std::vector<Eigen::VectorXd> cmaq_;   // per day, length n_cells
  std::vector<Eigen::MatrixXd> covs_;   // per day, n_cells x n_covariates
};

// One day of monitor observations joined with the grid values at the linked
// cells; also used for prediction targets (empty y).
struct DayTable {
  int day = 0;
  Date date;
  std::vector<int> site_rows;  // indices into the monitor dataset; empty for cell targets
  std::vector<LonLat> locs;
  Eigen::VectorXd y;  // observations; size 0 when the table holds targets only
  Eigen::VectorXd z;  // model output at the linked cell
  Eigen::MatrixXd x;  // covariates at the linked cell, one row per location
  std::vector<std::string> covariate_names;

  int n() const { return static_cast<int>(locs.size()); }
};

// Join the active monitors of one day with grid values. `site_filter`, when
// given, keeps only the listed site indices. Monitor and grid date axes must
// agree on the day being joined.
DayTable make_day_table(const MonitorDataset& monitors, const GridDataset& grid, int day,
                        std::span<const int> site_filter = {});

// Target table over every grid cell centroid for one day.
DayTable make_cell_table(const GridDataset& grid, int day);

}  // namespace airfuse
