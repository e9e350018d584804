#include "airfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "airfuse/csv.hpp"
#include "airfuse/parallel.hpp"
#include "airfuse/rng.hpp"
#include "airfuse/stats.hpp"

namespace airfuse {

MethodKind parse_method(const std::string& cli_name) {
  if (cli_name == "ols-cmaq") return MethodKind::OlsCmaq;
  if (cli_name == "ols-covs") return MethodKind::OlsCovs;
  if (cli_name == "ols-both") return MethodKind::OlsBoth;
  if (cli_name == "idw") return MethodKind::Idw;
  if (cli_name == "uk-cmaq") return MethodKind::UkCmaq;
  if (cli_name == "uk-covs") return MethodKind::UkCovs;
  if (cli_name == "uk-both") return MethodKind::UkBoth;
  if (cli_name == "downscaler") return MethodKind::Downscaler;
  if (cli_name == "rf") return MethodKind::RandomForest;
  throw ConfigError("unknown method '" + cli_name + "'");
}

std::string method_cli_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::OlsCmaq: return "ols-cmaq";
    case MethodKind::OlsCovs: return "ols-covs";
    case MethodKind::OlsBoth: return "ols-both";
    case MethodKind::Idw: return "idw";
    case MethodKind::UkCmaq: return "uk-cmaq";
    case MethodKind::UkCovs: return "uk-covs";
    case MethodKind::UkBoth: return "uk-both";
    case MethodKind::Downscaler: return "downscaler";
    case MethodKind::RandomForest: return "rf";
  }
  return "?";
}

std::string method_display_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::OlsCmaq: return "OLS (CMAQ)";
    case MethodKind::OlsCovs: return "OLS (Covs)";
    case MethodKind::OlsBoth: return "OLS (CMAQ+Covs)";
    case MethodKind::Idw: return "IDW";
    case MethodKind::UkCmaq: return "UK (CMAQ)";
    case MethodKind::UkCovs: return "UK (Covs)";
    case MethodKind::UkBoth: return "UK (CMAQ+Covs)";
    case MethodKind::Downscaler: return "Downscaler (CMAQ)";
    case MethodKind::RandomForest: return "RF (CMAQ+Covs)";
  }
  return "?";
}

int method_order(const std::string& display_name) {
  static const std::vector<std::string> order{
      "OLS (CMAQ)", "OLS (Covs)", "OLS (CMAQ+Covs)",  "IDW",           "UK (CMAQ)",
      "UK (Covs)",  "UK (CMAQ+Covs)", "Downscaler (CMAQ)", "RF (CMAQ+Covs)"};
  for (int i = 0; i < static_cast<int>(order.size()); ++i) {
    if (order[i] == display_name) return i;
  }
  return static_cast<int>(order.size());  // external methods trail
}

Metrics compute_metrics(std::span<const PredictionRecord> records) {
  if (records.empty()) throw InvalidArgument("metrics: no records");
  Metrics m;
  m.count = static_cast<long>(records.size());
  double sse = 0.0, sad = 0.0;
  long covered = 0;
  Eigen::VectorXd obs(m.count), pred(m.count);
  for (long i = 0; i < m.count; ++i) {
    const PredictionRecord& r = records[i];
    if (!std::isfinite(r.observed) || !std::isfinite(r.predicted)) {
      throw InvalidArgument("metrics: non-finite record for site " + r.site_id);
    }
    const double e = r.predicted - r.observed;
    sse += e * e;
    sad += std::abs(e);
    obs(i) = r.observed;
    pred(i) = r.predicted;
    if (r.lower95 && r.upper95) {
      ++m.interval_count;
      if (r.observed >= *r.lower95 && r.observed <= *r.upper95) ++covered;
    }
  }
  m.rmse = std::sqrt(sse / static_cast<double>(m.count));
  m.mad = sad / static_cast<double>(m.count);
  if (m.count >= 2) m.corr = pearson_correlation(pred, obs);
  if (m.interval_count > 0) m.coverage = static_cast<double>(covered) / m.interval_count;
  return m;
}

Strategy parse_strategy(const std::string& name) {
  if (name == "overall") return Strategy::Overall;
  if (name == "nearby") return Strategy::Nearby;
  if (name == "urban") return Strategy::Urban;
  if (name == "level") return Strategy::Level;
  if (name == "distance") return Strategy::Distance;
  if (name == "eastwest") return Strategy::EastWest;
  if (name == "season") return Strategy::Season;
  throw ConfigError("unknown stratification '" + name + "'");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Overall: return "overall";
    case Strategy::Nearby: return "nearby";
    case Strategy::Urban: return "urban";
    case Strategy::Level: return "level";
    case Strategy::Distance: return "distance";
    case Strategy::EastWest: return "eastwest";
    case Strategy::Season: return "season";
  }
  return "?";
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all{Strategy::Overall,  Strategy::Nearby, Strategy::Urban,
                                         Strategy::Level,    Strategy::Distance,
                                         Strategy::EastWest, Strategy::Season};
  return all;
}

std::vector<std::string> stratum_order(Strategy s) {
  switch (s) {
    case Strategy::Overall: return {"overall"};
    case Strategy::Nearby: return {"<5", "5-9", "10-19", ">=20"};
    case Strategy::Urban: return {"Urban", "Non-Urban"};
    case Strategy::Level: return {"Low", "Med", "High"};
    case Strategy::Distance: return {"<50 miles", ">=50 miles"};
    case Strategy::EastWest: return {"West", "East"};
    case Strategy::Season: return {"Winter", "Spring", "Summer", "Fall"};
  }
  return {};
}

namespace {

// Stratum label for one record. Concentration bins are closed on the left
// (Low [0,6), Med [6,12), High [12,inf)); the east/west boundary line itself
// counts as East; nearby/distance statistics exclude the record's own site.
std::string record_label(const PredictionRecord& r, const MonitorDataset& monitors, Strategy s) {
  if (r.site_row < 0 || r.site_row >= monitors.n_sites() ||
      monitors.site(r.site_row).id != r.site_id || !monitors.has_observation(r.site_row, r.day)) {
    throw DataIntegrity("stratify: record for site '" + r.site_id + "' on " + format_date(r.date) +
                        " does not join to the dataset");
  }
  const Site& site = monitors.site(r.site_row);
  switch (s) {
    case Strategy::Overall:
      return "overall";
    case Strategy::Nearby: {
      const auto stats = active_site_stats(monitors, r.day, site.loc, 50.0, r.site_row);
      if (stats.count_within < 5) return "<5";
      if (stats.count_within < 10) return "5-9";
      if (stats.count_within < 20) return "10-19";
      return ">=20";
    }
    case Strategy::Urban:
      return site.urban ? "Urban" : "Non-Urban";
    case Strategy::Level:
      if (r.observed < 6.0) return "Low";
      if (r.observed < 12.0) return "Med";
      return "High";
    case Strategy::Distance: {
      const auto stats = active_site_stats(monitors, r.day, site.loc, 50.0, r.site_row);
      return stats.nearest_miles < 50.0 ? "<50 miles" : ">=50 miles";
    }
    case Strategy::EastWest:
      return site.loc.lon >= -100.0 ? "East" : "West";
    case Strategy::Season:
      return season_name(season_of(r.date));
  }
  return "?";
}

}  // namespace

std::vector<std::pair<std::string, std::vector<PredictionRecord>>> stratify(
    std::span<const PredictionRecord> records, const MonitorDataset& monitors, Strategy strategy) {
  std::vector<std::pair<std::string, std::vector<PredictionRecord>>> out;
  for (const std::string& label : stratum_order(strategy)) out.emplace_back(label, std::vector<PredictionRecord>{});
  for (const PredictionRecord& r : records) {
    const std::string label = record_label(r, monitors, strategy);
    bool placed = false;
    for (auto& [name, bucket] : out) {
      if (name == label) {
        bucket.push_back(r);
        placed = true;
        break;
      }
    }
    if (!placed) out.emplace_back(label, std::vector<PredictionRecord>{r});
  }
  return out;
}

const ReportRow* EvalReport::find(const std::string& method, const std::string& strategy,
                                  const std::string& stratum) const {
  for (const ReportRow& row : rows) {
    if (row.method == method && row.strategy == strategy && row.stratum == stratum) return &row;
  }
  return nullptr;
}

namespace {

Metrics day_averaged_metrics(std::span<const PredictionRecord> records) {
  Metrics pooled = compute_metrics(records);
  std::map<int, std::vector<PredictionRecord>> by_day;
  for (const PredictionRecord& r : records) by_day[r.day].push_back(r);
  double rmse_sum = 0.0, mad_sum = 0.0;
  for (const auto& [day, recs] : by_day) {
    const Metrics m = compute_metrics(recs);
    rmse_sum += m.rmse;
    mad_sum += m.mad;
  }
  pooled.rmse = rmse_sum / static_cast<double>(by_day.size());
  pooled.mad = mad_sum / static_cast<double>(by_day.size());
  return pooled;
}

}  // namespace

EvalReport build_report(std::span<const PredictionRecord> records, const MonitorDataset& monitors,
                        std::span<const Strategy> strategies, bool day_averaged) {
  if (records.empty()) throw InvalidArgument("report: no records");

  std::vector<std::string> methods;
  for (const PredictionRecord& r : records) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }
  std::stable_sort(methods.begin(), methods.end(), [](const std::string& a, const std::string& b) {
    const int oa = method_order(a), ob = method_order(b);
    if (oa != ob) return oa < ob;
    return a < b;
  });

  EvalReport report;
  for (Strategy strategy : strategies) {
    const auto strata = stratify(records, monitors, strategy);
    for (const auto& [label, bucket] : strata) {
      // observed summary over distinct site-days in the stratum
      std::set<std::pair<int, int>> seen;
      std::vector<double> obs;
      for (const PredictionRecord& r : bucket) {
        if (seen.emplace(r.site_row, r.day).second) obs.push_back(r.observed);
      }
      double obs_mean = 0.0, obs_sd = 0.0;
      if (!obs.empty()) {
        const Eigen::VectorXd v =
            Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
        obs_mean = v.mean();
        obs_sd = sample_sd(v);
      }
      for (const std::string& method : methods) {
        std::vector<PredictionRecord> mine;
        for (const PredictionRecord& r : bucket) {
          if (r.method == method) mine.push_back(r);
        }
        ReportRow row;
        row.method = method;
        row.strategy = strategy_name(strategy);
        row.stratum = label;
        row.obs_mean = obs_mean;
        row.obs_sd = obs_sd;
        if (!mine.empty()) {
          row.metrics = day_averaged ? day_averaged_metrics(mine) : compute_metrics(mine);
        }
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

namespace {

struct FoldContext {
  const MonitorDataset& monitors;
  const GridDataset& grid;
  const BenchmarkOptions& options;
  const FoldPlan& plan;
  int fold;
  std::vector<int> train_sites;
  std::vector<int> test_sites;
};

std::vector<std::string> benchmark_covariates(const GridDataset& grid,
                                              const BenchmarkOptions& options) {
  if (!options.covariates.empty()) return options.covariates;
  return grid.covariate_names();
}

MeanSpec spec_for(MethodKind kind, const std::vector<std::string>& covs) {
  switch (kind) {
    case MethodKind::OlsCmaq:
    case MethodKind::UkCmaq:
      return MeanSpec::cmaq_only();
    case MethodKind::OlsCovs:
    case MethodKind::UkCovs:
      return MeanSpec::covs_only(covs);
    default:
      return MeanSpec::cmaq_plus_covs(covs);
  }
}

PredictionRecord base_record(const FoldContext& ctx, MethodKind kind, int site, int day) {
  PredictionRecord r;
  r.method = method_display_name(kind);
  r.site_id = ctx.monitors.site(site).id;
  r.site_row = site;
  r.day = day;
  r.date = ctx.monitors.date(day);
  r.fold = ctx.fold;
  r.observed = *ctx.monitors.observation(site, day);
  return r;
}

void run_ols_fold(const FoldContext& ctx, MethodKind kind, std::vector<PredictionRecord>& records,
                  MethodLog& log) {
  const MeanSpec spec = spec_for(kind, benchmark_covariates(ctx.grid, ctx.options));
  for (int t = 0; t < ctx.monitors.n_days(); ++t) {
    const DayTable targets = make_day_table(ctx.monitors, ctx.grid, t, ctx.test_sites);
    if (targets.n() == 0) continue;
    const DayTable train = make_day_table(ctx.monitors, ctx.grid, t, ctx.train_sites);

    std::optional<OlsFit> fit;
    if (train.n() > spec.n_regressors() + 1) {
      try {
        fit = ols_fit_day(train, spec);
      } catch (const SingularDesign&) {
        fit.reset();
      }
    }
    if (fit) {
      const IntervalPrediction pred = ols_predict(*fit, targets);
      for (int i = 0; i < targets.n(); ++i) {
        PredictionRecord r = base_record(ctx, kind, targets.site_rows[i], t);
        r.predicted = pred.mean(i);
        r.variance = pred.variance(i);
        r.lower95 = pred.lower95(i);
        r.upper95 = pred.upper95(i);
        records.push_back(std::move(r));
      }
      continue;
    }
    if (train.n() >= 2) {
      // degraded mode: intercept-only regression for the day
      ++log.ols_fallback_days;
      const double mu = train.y.mean();
      const double s2 = sample_variance(train.y);
      const double var = s2 * (1.0 + 1.0 / train.n());
      const double tq = student_t_quantile(0.975, train.n() - 1);
      for (int i = 0; i < targets.n(); ++i) {
        PredictionRecord r = base_record(ctx, kind, targets.site_rows[i], t);
        r.predicted = mu;
        r.variance = var;
        r.lower95 = mu - tq * std::sqrt(var);
        r.upper95 = mu + tq * std::sqrt(var);
        records.push_back(std::move(r));
      }
      continue;
    }
    ++log.skipped_days;
    log.skipped_records += targets.n();
  }
}

void run_idw_fold(const FoldContext& ctx, std::vector<PredictionRecord>& records, MethodLog& log) {
  const MonitorDataset train_data = restrict_sites(ctx.monitors, ctx.train_sites);
  const int tune_folds = std::min<int>(5, std::max(2, train_data.n_sites() / 2));
  const IdwTuneResult tuned =
      idw_tune_phi(train_data, ctx.options.idw_phi_grid, tune_folds,
                   derive_seed(ctx.options.seed, 0x1D3 + ctx.fold), ctx.options.idw_cutoff_km);
  const IdwConfig cfg{tuned.best_phi, ctx.options.idw_cutoff_km};

  for (int t = 0; t < ctx.monitors.n_days(); ++t) {
    std::vector<LonLat> train_locs;
    std::vector<double> train_vals;
    for (int s : ctx.train_sites) {
      if (const auto v = ctx.monitors.observation(s, t)) {
        train_locs.push_back(ctx.monitors.site(s).loc);
        train_vals.push_back(*v);
      }
    }
    const Eigen::VectorXd train_y = Eigen::Map<const Eigen::VectorXd>(
        train_vals.data(), static_cast<Eigen::Index>(train_vals.size()));
    for (int s : ctx.test_sites) {
      if (!ctx.monitors.has_observation(s, t)) continue;
      PredictionRecord r = base_record(ctx, MethodKind::Idw, s, t);
      try {
        r.predicted = idw_predict(train_locs, train_y, ctx.monitors.site(s).loc, cfg);
      } catch (const NoNeighbor&) {
        ++log.skipped_records;  // no variance estimate and nothing in range
        continue;
      }
      records.push_back(std::move(r));
    }
  }
}

void run_uk_fold(const FoldContext& ctx, MethodKind kind, std::vector<PredictionRecord>& records,
                 MethodLog& log) {
  const MeanSpec spec = spec_for(kind, benchmark_covariates(ctx.grid, ctx.options));
  const UkDayFits fits =
      uk_fit_days(ctx.monitors, ctx.grid, spec, ctx.train_sites, ctx.options.uk, 1);
  log.ml_days += fits.ml_days;
  log.gls_fallback_days += fits.gls_fallback_days;
  log.skipped_days += fits.skipped_days;
  for (int t = 0; t < ctx.monitors.n_days(); ++t) {
    const DayTable targets = make_day_table(ctx.monitors, ctx.grid, t, ctx.test_sites);
    if (targets.n() == 0) continue;
    if (!fits.models[t]) {
      log.skipped_records += targets.n();
      continue;
    }
    const KrigingPrediction pred = uk_predict(*fits.models[t], targets);
    for (int i = 0; i < targets.n(); ++i) {
      PredictionRecord r = base_record(ctx, kind, targets.site_rows[i], t);
      r.predicted = pred.mean(i);
      r.variance = pred.variance(i);
      r.lower95 = pred.lower95(i);
      r.upper95 = pred.upper95(i);
      records.push_back(std::move(r));
    }
  }
}

void run_downscaler_fold(const FoldContext& ctx, std::vector<PredictionRecord>& records,
                         MethodLog& log) {
  for (int t = 0; t < ctx.monitors.n_days(); ++t) {
    const DayTable targets = make_day_table(ctx.monitors, ctx.grid, t, ctx.test_sites);
    if (targets.n() == 0) continue;
    const DayTable train = make_day_table(ctx.monitors, ctx.grid, t, ctx.train_sites);
    if (train.n() < 5) {
      ++log.skipped_days;
      log.skipped_records += targets.n();
      continue;
    }
    McmcConfig mcmc = ctx.options.mcmc;
    mcmc.seed = derive_seed(ctx.options.seed, 0xD5C0 + static_cast<std::uint64_t>(ctx.fold) * 4096 + t);
    DownscalerPosterior post;
    try {
      post = downscaler_fit(train, ctx.options.priors, mcmc);
    } catch (const Error&) {
      ++log.skipped_days;
      log.skipped_records += targets.n();
      continue;
    }
    const DownscalerPrediction pred = downscaler_predict(post, targets);
    for (int i = 0; i < targets.n(); ++i) {
      PredictionRecord r = base_record(ctx, MethodKind::Downscaler, targets.site_rows[i], t);
      r.predicted = pred.median(i);
      r.variance = pred.variance(i);
      r.lower95 = pred.lower95(i);
      r.upper95 = pred.upper95(i);
      records.push_back(std::move(r));
    }
  }
}

void run_rf_fold(const FoldContext& ctx, std::vector<PredictionRecord>& records, MethodLog& log) {
  const auto covs = benchmark_covariates(ctx.grid, ctx.options);
  const AssembledRows train = assemble_feature_rows(ctx.monitors, ctx.grid, ctx.train_sites, covs);
  ForestConfig cfg = ctx.options.forest;
  cfg.seed = derive_seed(ctx.options.seed, 0x4F00 + ctx.fold);
  const Forest forest = rf_train(train.x, train.y, cfg, 1);

  const AssembledRows test = assemble_feature_rows(ctx.monitors, ctx.grid, ctx.test_sites, covs);
  for (Eigen::Index i = 0; i < test.x.rows(); ++i) {
    const auto [site, day] = test.site_day[static_cast<std::size_t>(i)];
    const ForestPrediction pred = rf_predict(forest, test.x.row(i));
    PredictionRecord r = base_record(ctx, MethodKind::RandomForest, site, day);
    r.predicted = pred.mean;
    r.variance = pred.variance;
    r.lower95 = pred.mean - 1.96 * std::sqrt(pred.variance);
    r.upper95 = pred.mean + 1.96 * std::sqrt(pred.variance);
    records.push_back(std::move(r));
  }
  (void)log;
}

// Records within a unit come out ordered by (site, day) for determinism.
void sort_records(std::vector<PredictionRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.site_row != b.site_row) return a.site_row < b.site_row;
    return a.day < b.day;
  });
}

}  // namespace

AssembledRows assemble_feature_rows(const MonitorDataset& monitors, const GridDataset& grid,
                                    std::span<const int> sites,
                                    std::span<const std::string> covariates) {
  std::vector<int> cov_idx;
  for (const auto& name : covariates) {
    const auto idx = grid.covariate_index(name);
    if (!idx) throw MissingCovariate("features: covariate '" + name + "' not in grid");
    cov_idx.push_back(*idx);
  }
  std::vector<int> ordered(sites.begin(), sites.end());
  std::sort(ordered.begin(), ordered.end(),
            [&](int a, int b) { return monitors.site(a).id < monitors.site(b).id; });

  std::vector<FeatureRow> rows;
  std::vector<double> y;
  AssembledRows out;
  for (int s : ordered) {
    const Site& site = monitors.site(s);
    const CellIndex cell = grid.geometry().link(site.loc);
    for (int t = 0; t < monitors.n_days(); ++t) {
      const auto v = monitors.observation(s, t);
      if (!v) continue;
      FeatureRow r;
      r.lon = site.loc.lon;
      r.lat = site.loc.lat;
      r.day_of_year = day_of_year(monitors.date(t));
      r.covariates.resize(static_cast<Eigen::Index>(cov_idx.size()));
      for (std::size_t j = 0; j < cov_idx.size(); ++j) {
        r.covariates(static_cast<Eigen::Index>(j)) = grid.covariate(cell, t, cov_idx[j]);
      }
      r.model_output = grid.model_output(cell, t);
      rows.push_back(std::move(r));
      y.push_back(*v);
      out.site_day.emplace_back(s, t);
    }
  }
  if (rows.empty()) throw InsufficientData("features: no observations for the given sites");
  out.x = feature_matrix(rows);
  out.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  return out;
}

BenchmarkResult run_benchmark(const MonitorDataset& monitors, const GridDataset& grid,
                              const BenchmarkOptions& options) {
  if (options.methods.empty()) throw ConfigError("benchmark: no methods given");
  BenchmarkResult result;
  result.folds = make_site_folds(monitors.n_sites(), options.k_folds, options.seed);

  struct Unit {
    MethodKind method;
    int fold;
  };
  std::vector<Unit> units;
  for (MethodKind m : options.methods) {
    for (int f = 0; f < options.k_folds; ++f) units.push_back({m, f});
  }

  std::vector<std::vector<PredictionRecord>> unit_records(units.size());
  std::vector<MethodLog> unit_logs(units.size());
  parallel_for(units.size(), options.workers, [&](std::size_t ui) {
    const Unit& unit = units[ui];
    FoldContext ctx{monitors, grid,        options,
                    result.folds, unit.fold, result.folds.training(unit.fold),
                    result.folds.held_out(unit.fold)};
    MethodLog log;
    log.method = method_display_name(unit.method);
    std::vector<PredictionRecord>& records = unit_records[ui];
    switch (unit.method) {
      case MethodKind::OlsCmaq:
      case MethodKind::OlsCovs:
      case MethodKind::OlsBoth:
        run_ols_fold(ctx, unit.method, records, log);
        break;
      case MethodKind::Idw:
        run_idw_fold(ctx, records, log);
        break;
      case MethodKind::UkCmaq:
      case MethodKind::UkCovs:
      case MethodKind::UkBoth:
        run_uk_fold(ctx, unit.method, records, log);
        break;
      case MethodKind::Downscaler:
        run_downscaler_fold(ctx, records, log);
        break;
      case MethodKind::RandomForest:
        run_rf_fold(ctx, records, log);
        break;
    }
    sort_records(records);
    unit_logs[ui] = std::move(log);
  });

  for (std::size_t ui = 0; ui < units.size(); ++ui) {
    result.records.insert(result.records.end(), unit_records[ui].begin(), unit_records[ui].end());
    MethodLog* agg = nullptr;
    for (MethodLog& l : result.logs) {
      if (l.method == unit_logs[ui].method) agg = &l;
    }
    if (!agg) {
      result.logs.push_back(MethodLog{unit_logs[ui].method});
      agg = &result.logs.back();
    }
    agg->skipped_records += unit_logs[ui].skipped_records;
    agg->skipped_days += unit_logs[ui].skipped_days;
    agg->ml_days += unit_logs[ui].ml_days;
    agg->gls_fallback_days += unit_logs[ui].gls_fallback_days;
    agg->ols_fallback_days += unit_logs[ui].ols_fallback_days;
  }

  result.report = build_report(result.records, monitors, all_strategies(), options.day_averaged);
  return result;
}

namespace {

std::string opt_field(const std::optional<double>& v) { return v ? format_full(*v) : ""; }

}  // namespace

void write_records_csv(const std::string& path, std::span<const PredictionRecord> records) {
  CsvWriter w(path);
  w.raw_line("method,site_id,date,fold,observed,predicted,variance,lower95,upper95");
  for (const PredictionRecord& r : records) {
    w.row({r.method, r.site_id, format_date(r.date), std::to_string(r.fold),
           format_full(r.observed), format_full(r.predicted), opt_field(r.variance),
           opt_field(r.lower95), opt_field(r.upper95)});
  }
}

std::vector<PredictionRecord> read_records_csv(const std::string& path) {
  CsvReader reader(path);
  std::vector<std::string> f;
  if (!reader.next(f) || f.size() != 9 || f[0] != "method") {
    reader.fail("expected records header");
  }
  std::vector<PredictionRecord> records;
  while (reader.next(f)) {
    if (f.size() != 9) reader.fail("expected 9 fields");
    PredictionRecord r;
    r.method = f[0];
    r.site_id = f[1];
    r.date = parse_date(f[2]);
    r.fold = static_cast<int>(reader.parse_long(f[3], "fold"));
    r.observed = reader.parse_double(f[4], "observed");
    r.predicted = reader.parse_double(f[5], "predicted");
    if (!f[6].empty()) r.variance = reader.parse_double(f[6], "variance");
    if (!f[7].empty()) r.lower95 = reader.parse_double(f[7], "lower95");
    if (!f[8].empty()) r.upper95 = reader.parse_double(f[8], "upper95");
    if (r.lower95 && r.upper95 && *r.lower95 > *r.upper95) {
      reader.fail("interval endpoints out of order");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void resolve_records(std::vector<PredictionRecord>& records, const MonitorDataset& monitors) {
  for (PredictionRecord& r : records) {
    const auto site = monitors.find_site(r.site_id);
    if (!site) throw DataIntegrity("records: unknown site '" + r.site_id + "'");
    const auto day = monitors.find_day(r.date);
    if (!day) throw DataIntegrity("records: date " + format_date(r.date) + " not in dataset");
    r.site_row = *site;
    r.day = *day;
    const auto obs = monitors.observation(*site, *day);
    if (!obs) {
      throw DataIntegrity("records: site '" + r.site_id + "' has no observation on " +
                          format_date(r.date));
    }
    r.observed = *obs;
  }
}

ExternalScore score_external(const std::string& predictions_csv, const MonitorDataset& monitors,
                             const FoldPlan& folds, bool day_averaged) {
  CsvReader reader(predictions_csv);
  std::vector<std::string> f;
  if (!reader.next(f) || f.size() != 7 || f[0] != "method" || f[1] != "site_id" ||
      f[2] != "date" || f[3] != "predicted" || f[4] != "variance" || f[5] != "lower95" ||
      f[6] != "upper95") {
    reader.fail("expected header method,site_id,date,predicted,variance,lower95,upper95");
  }

  ExternalScore out;
  std::set<std::tuple<std::string, std::string, long>> seen;
  while (reader.next(f)) {
    if (f.size() != 7) reader.fail("expected 7 fields");
    PredictionRecord r;
    r.method = f[0];
    r.site_id = f[1];
    r.date = parse_date(f[2]);
    r.predicted = reader.parse_double(f[3], "predicted");
    if (!f[4].empty()) r.variance = reader.parse_double(f[4], "variance");
    if (!f[5].empty()) r.lower95 = reader.parse_double(f[5], "lower95");
    if (!f[6].empty()) r.upper95 = reader.parse_double(f[6], "upper95");
    if (r.lower95 && r.upper95 && *r.lower95 > *r.upper95) {
      reader.fail("interval endpoints out of order");
    }

    const auto site = monitors.find_site(r.site_id);
    if (!site) {
      throw DataIntegrity(predictions_csv + ": unknown site '" + r.site_id + "' (line " +
                          std::to_string(reader.line()) + ")");
    }
    const auto day = monitors.find_day(r.date);
    if (!day || !monitors.has_observation(*site, *day)) {
      throw DataIntegrity(predictions_csv + ": site '" + r.site_id + "' has no observation on " +
                          format_date(r.date) + " (line " + std::to_string(reader.line()) + ")");
    }
    r.site_row = *site;
    r.day = *day;
    r.observed = *monitors.observation(*site, *day);
    // leakage: a site the fold plan never held out was trained on itself
    if (*site >= static_cast<int>(folds.fold_of_site.size()) || folds.fold_of_site[*site] < 0) {
      throw LeakageError(predictions_csv + ": prediction for site '" + r.site_id + "' on " +
                         format_date(r.date) + " (line " + std::to_string(reader.line()) +
                         "): the site was never held out by the fold plan");
    }
    r.fold = folds.fold_of_site[*site];
    if (!seen.emplace(r.method, r.site_id, civil_days(r.date)).second) {
      throw DuplicateKey(predictions_csv + ": duplicate prediction for method '" + r.method +
                         "', site '" + r.site_id + "', " + format_date(r.date));
    }
    out.records.push_back(std::move(r));
  }
  if (out.records.empty()) throw ParseError(predictions_csv + ": no prediction rows");

  std::set<std::string> methods;
  for (const PredictionRecord& r : out.records) methods.insert(r.method);
  out.missing_records =
      static_cast<long>(methods.size()) * monitors.n_observations() - static_cast<long>(out.records.size());
  out.report = build_report(out.records, monitors, all_strategies(), day_averaged);
  return out;
}

namespace {

std::string metric_field(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::string& path, const EvalReport& report) {
  CsvWriter w(path);
  w.raw_line("method,strategy,stratum,count,rmse,mad,corr,coverage,obs_mean,obs_sd");
  for (const ReportRow& row : report.rows) {
    w.row({row.method, row.strategy, row.stratum, std::to_string(row.metrics.count),
           row.metrics.count ? metric_field(row.metrics.rmse) : "",
           row.metrics.count ? metric_field(row.metrics.mad) : "",
           row.metrics.corr ? metric_field(*row.metrics.corr) : "",
           row.metrics.coverage ? metric_field(*row.metrics.coverage) : "",
           row.metrics.count ? metric_field(row.obs_mean) : "",
           row.metrics.count ? metric_field(row.obs_sd) : ""});
  }
}

void write_strategy_table_csv(const std::string& path, const EvalReport& report,
                              Strategy strategy) {
  const std::string sname = strategy_name(strategy);
  std::vector<std::string> methods;
  std::vector<std::string> strata;
  for (const ReportRow& row : report.rows) {
    if (row.strategy != sname) continue;
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
      methods.push_back(row.method);
    }
    if (std::find(strata.begin(), strata.end(), row.stratum) == strata.end()) {
      strata.push_back(row.stratum);
    }
  }
  if (methods.empty()) throw InvalidArgument("table: report lacks strategy '" + sname + "'");
  // canonical column order first, extra strata after
  std::vector<std::string> ordered;
  for (const std::string& s : stratum_order(strategy)) {
    if (std::find(strata.begin(), strata.end(), s) != strata.end()) ordered.push_back(s);
  }
  for (const std::string& s : strata) {
    if (std::find(ordered.begin(), ordered.end(), s) == ordered.end()) ordered.push_back(s);
  }

  CsvWriter w(path);
  if (strategy == Strategy::Overall) {
    w.raw_line("method,rmse,mad,corr,coverage");
    for (const std::string& m : methods) {
      const ReportRow* row = report.find(m, sname, "overall");
      if (!row || row->metrics.count == 0) continue;
      w.row({m, metric_field(row->metrics.rmse), metric_field(row->metrics.mad),
             row->metrics.corr ? metric_field(*row->metrics.corr) : "",
             row->metrics.coverage ? metric_field(*row->metrics.coverage) : ""});
    }
    return;
  }
  std::string header = "method";
  for (const std::string& s : ordered) header += "," + s;
  w.raw_line(header);
  for (const std::string& m : methods) {
    std::vector<std::string> fields{m};
    for (const std::string& s : ordered) {
      const ReportRow* row = report.find(m, sname, s);
      fields.push_back(row && row->metrics.count ? metric_field(row->metrics.rmse) : "");
    }
    w.row(fields);
  }
  // observed mean (sd) footer, as in the stratified tables
  std::vector<std::string> footer{"observed"};
  for (const std::string& s : ordered) {
    const ReportRow* row = nullptr;
    for (const ReportRow& cand : report.rows) {
      if (cand.strategy == sname && cand.stratum == s && cand.metrics.count > 0) {
        row = &cand;
        break;
      }
    }
    footer.push_back(row ? metric_field(row->obs_mean) + " (" + metric_field(row->obs_sd) + ")"
                         : "");
  }
  w.row(footer);
}

}  // namespace airfuse
