#include "airfuse/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

namespace airfuse {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return kDays[m - 1];
}

int parse_int_strict(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("invalid integer field '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

bool is_valid_date(const Date& d) {
  return d.year >= 1 && d.month >= 1 && d.month <= 12 && d.day >= 1 &&
         d.day <= days_in_month(d.year, d.month);
}

Date parse_date(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw ParseError("date must be YYYY-MM-DD, got '" + std::string(iso) + "'");
  }
  Date d{parse_int_strict(iso.substr(0, 4)), parse_int_strict(iso.substr(5, 2)),
         parse_int_strict(iso.substr(8, 2))};
  if (!is_valid_date(d)) throw ParseError("invalid calendar date '" + std::string(iso) + "'");
  return d;
}

std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

// Days since 1970-01-01 (Howard Hinnant's civil-from-days construction).
long civil_days(const Date& d) {
  const int y = d.year - (d.month <= 2 ? 1 : 0);
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (d.month + (d.month > 2 ? -3 : 9)) + 2u) / 5u + d.day - 1u;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097L + static_cast<long>(doe) - 719468L;
}

Date add_days(const Date& d, int days) {
  long z = civil_days(d) + days + 719468L;
  const long era = (z >= 0 ? z : z - 146096L) / 146097L;
  const unsigned doe = static_cast<unsigned>(z - era * 146097L);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned day = doy - (153 * mp + 2) / 5 + 1;
  const unsigned month = mp + (mp < 10 ? 3 : -9);
  return Date{static_cast<int>(y + (month <= 2 ? 1 : 0)), static_cast<int>(month),
              static_cast<int>(day)};
}

int day_of_year(const Date& d) {
  return static_cast<int>(civil_days(d) - civil_days(Date{d.year, 1, 1})) + 1;
}

Season season_of(const Date& d) {
  switch (d.month) {
    case 12:
    case 1:
    case 2:
      return Season::Winter;
    case 3:
    case 4:
    case 5:
      return Season::Spring;
    case 6:
    case 7:
    case 8:
      return Season::Summer;
    default:
      return Season::Fall;
  }
}

std::string season_name(Season s) {
  switch (s) {
    case Season::Winter: return "Winter";
    case Season::Spring: return "Spring";
    case Season::Summer: return "Summer";
    case Season::Fall: return "Fall";
  }
  return "?";
}

MonitorDataset::MonitorDataset(std::vector<Site> sites, std::vector<Date> days)
    : sites_(std::move(sites)), days_(std::move(days)) {
  if (days_.empty()) throw InvalidArgument("monitor dataset: at least one day required");
  for (int i = 0; i < n_sites(); ++i) {
    const Site& s = sites_[i];
    if (s.id.empty()) throw InvalidArgument("monitor dataset: empty site id");
    validate_coordinate(s.loc);
    if (!site_index_.emplace(s.id, i).second) {
      throw DuplicateKey("monitor dataset: duplicate site id '" + s.id + "'");
    }
  }
  values_ = Eigen::MatrixXd::Zero(n_sites(), n_days());
  present_ = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n_sites(), n_days(), false);
}

void MonitorDataset::set_observation(int site, int day, double value) {
  if (site < 0 || site >= n_sites() || day < 0 || day >= n_days()) {
    throw InvalidArgument("monitor dataset: observation index out of range");
  }
  if (!std::isfinite(value)) throw InvalidArgument("monitor dataset: non-finite observation");
  values_(site, day) = value;
  present_(site, day) = true;
}

std::optional<int> MonitorDataset::find_site(const SiteId& id) const {
  auto it = site_index_.find(id);
  if (it == site_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> MonitorDataset::find_day(const Date& d) const {
  for (int t = 0; t < n_days(); ++t) {
    if (days_[t] == d) return t;
  }
  return std::nullopt;
}

bool MonitorDataset::has_observation(int site, int day) const {
  return site >= 0 && site < n_sites() && day >= 0 && day < n_days() && present_(site, day);
}

std::optional<double> MonitorDataset::observation(int site, int day) const {
  if (!has_observation(site, day)) return std::nullopt;
  return values_(site, day);
}

std::vector<int> MonitorDataset::active_sites(int day) const {
  std::vector<int> out;
  for (int i = 0; i < n_sites(); ++i) {
    if (present_(i, day)) out.push_back(i);
  }
  return out;
}

long MonitorDataset::n_observations() const {
  long n = 0;
  for (int i = 0; i < n_sites(); ++i) {
    for (int t = 0; t < n_days(); ++t) {
      if (present_(i, t)) ++n;
    }
  }
  return n;
}

void MonitorDataset::validate() const {
  for (int i = 0; i < n_sites(); ++i) {
    for (int t = 0; t < n_days(); ++t) {
      if (present_(i, t) && values_(i, t) < 0.0) {
        throw InvalidArgument("monitor dataset: negative concentration at site " + sites_[i].id +
                              " day " + format_date(days_[t]));
      }
    }
  }
}

MonitorDataset restrict_sites(const MonitorDataset& data, std::span<const int> keep) {
  std::vector<Site> sites;
  sites.reserve(keep.size());
  for (int i : keep) sites.push_back(data.site(i));
  MonitorDataset out(std::move(sites), data.days());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    for (int t = 0; t < data.n_days(); ++t) {
      if (auto v = data.observation(keep[k], t)) {
        out.set_observation(static_cast<int>(k), t, *v);
      }
    }
  }
  return out;
}

ActiveSiteStats active_site_stats(const MonitorDataset& data, int day, const LonLat& target,
                                  double radius_miles, std::optional<int> exclude_site) {
  if (day < 0 || day >= data.n_days()) throw InvalidArgument("active_site_stats: day out of range");
  ActiveSiteStats stats;
  stats.nearest_miles = std::numeric_limits<double>::infinity();
  for (int i : data.active_sites(day)) {
    if (exclude_site && *exclude_site == i) continue;
    const double miles = miles_from_km(haversine_km(target, data.site(i).loc));
    if (miles < radius_miles) ++stats.count_within;  // strict inclusion
    stats.nearest_miles = std::min(stats.nearest_miles, miles);
  }
  return stats;
}

GridDataset::GridDataset(GridGeometry geom, std::vector<Date> days,
                         std::vector<std::string> covariate_names)
    : geom_(geom), days_(std::move(days)), covariate_names_(std::move(covariate_names)) {
  if (days_.empty()) throw InvalidArgument("grid dataset: at least one day required");
  for (std::size_t i = 0; i < covariate_names_.size(); ++i) {
    for (std::size_t j = i + 1; j < covariate_names_.size(); ++j) {
      if (covariate_names_[i] == covariate_names_[j]) {
        throw DuplicateKey("grid dataset: duplicate covariate name '" + covariate_names_[i] + "'");
      }
    }
  }
  cmaq_.assign(days_.size(), Eigen::VectorXd::Zero(geom_.n_cells()));
  covs_.assign(days_.size(), Eigen::MatrixXd::Zero(geom_.n_cells(), n_covariates()));
}

std::optional<int> GridDataset::find_day(const Date& d) const {
  for (int t = 0; t < n_days(); ++t) {
    if (days_[t] == d) return t;
  }
  return std::nullopt;
}

std::optional<int> GridDataset::covariate_index(const std::string& name) const {
  for (int i = 0; i < n_covariates(); ++i) {
    if (covariate_names_[i] == name) return i;
  }
  return std::nullopt;
}

double GridDataset::model_output(CellIndex c, int day) const {
  return cmaq_.at(day)(geom_.flat_index(c));
}

void GridDataset::set_model_output(CellIndex c, int day, double v) {
  cmaq_.at(day)(geom_.flat_index(c)) = v;
}

double GridDataset::covariate(CellIndex c, int day, int cov) const {
  return covs_.at(day)(geom_.flat_index(c), cov);
}

void GridDataset::set_covariate(CellIndex c, int day, int cov, double v) {
  covs_.at(day)(geom_.flat_index(c), cov) = v;
}

Eigen::VectorXd GridDataset::covariate_row(CellIndex c, int day) const {
  return covs_.at(day).row(geom_.flat_index(c)).transpose();
}

DayTable make_day_table(const MonitorDataset& monitors, const GridDataset& grid, int day,
                        std::span<const int> site_filter) {
  if (day < 0 || day >= monitors.n_days()) throw InvalidArgument("make_day_table: day out of range");
  if (day >= grid.n_days() || monitors.date(day) != grid.date(day)) {
    throw DataIntegrity("make_day_table: monitor and grid date axes disagree on day " +
                        std::to_string(day));
  }
  std::vector<int> rows;
  if (site_filter.empty()) {
    rows = monitors.active_sites(day);
  } else {
    for (int i : site_filter) {
      if (monitors.has_observation(i, day)) rows.push_back(i);
    }
    std::sort(rows.begin(), rows.end());
  }

  DayTable t;
  t.day = day;
  t.date = monitors.date(day);
  t.covariate_names = grid.covariate_names();
  const int n = static_cast<int>(rows.size());
  t.site_rows = std::move(rows);
  t.locs.reserve(n);
  t.y.resize(n);
  t.z.resize(n);
  t.x.resize(n, grid.n_covariates());
  for (int k = 0; k < n; ++k) {
    const Site& s = monitors.site(t.site_rows[k]);
    const CellIndex cell = grid.geometry().link(s.loc);
    t.locs.push_back(s.loc);
    t.y(k) = *monitors.observation(t.site_rows[k], day);
    t.z(k) = grid.model_output(cell, day);
    t.x.row(k) = grid.covariate_row(cell, day).transpose();
  }
  return t;
}

DayTable make_cell_table(const GridDataset& grid, int day) {
  if (day < 0 || day >= grid.n_days()) throw InvalidArgument("make_cell_table: day out of range");
  const GridGeometry& g = grid.geometry();
  DayTable t;
  t.day = day;
  t.date = grid.date(day);
  t.covariate_names = grid.covariate_names();
  const int n = g.n_cells();
  t.locs.reserve(n);
  t.z.resize(n);
  t.x.resize(n, grid.n_covariates());
  for (int idx = 0; idx < n; ++idx) {
    const CellIndex c = g.cell_from_flat(idx);
    t.locs.push_back(g.centroid(c));
    t.z(idx) = grid.model_output(c, day);
    t.x.row(idx) = grid.covariate_row(c, day).transpose();
  }
  return t;
}

}  // namespace airfuse
