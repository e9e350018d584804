#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "airfuse/downscaler.hpp"
#include "airfuse/folds.hpp"
#include "airfuse/forest.hpp"
#include "airfuse/idw.hpp"
#include "airfuse/kriging.hpp"

namespace airfuse {

enum class MethodKind {
  OlsCmaq,
  OlsCovs,
  OlsBoth,
  Idw,
  UkCmaq,
  UkCovs,
  UkBoth,
  Downscaler,
  RandomForest,
};

MethodKind parse_method(const std::string& cli_name);  // e.g. "uk-cmaq", "idw", "rf"
std::string method_cli_name(MethodKind kind);
std::string method_display_name(MethodKind kind);  // e.g. "UK (CMAQ)"
// Row order used in reports; internal methods first, external ones after.
int method_order(const std::string& display_name);

struct PredictionRecord {
  std::string method;  // display name
  SiteId site_id;
  int site_row = -1;
  int day = 0;
  Date date;
  int fold = -1;
  double observed = 0.0;
  double predicted = 0.0;
  std::optional<double> variance;
  std::optional<double> lower95;
  std::optional<double> upper95;
};

struct Metrics {
  double rmse = 0.0;
  double mad = 0.0;
  std::optional<double> corr;      // absent when either side is constant
  std::optional<double> coverage;  // absent when no record carries an interval
  long count = 0;
  long interval_count = 0;
};

// RMSE, MAD, Pearson correlation and 95%-interval coverage; correlation needs
// at least two records, coverage is computed only over interval records.
Metrics compute_metrics(std::span<const PredictionRecord> records);

enum class Strategy { Overall, Nearby, Urban, Level, Distance, EastWest, Season };
Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);
const std::vector<Strategy>& all_strategies();
std::vector<std::string> stratum_order(Strategy s);

// Assigns every record exactly one label under the strategy. Labels that need
// the monitoring network (active-site counts, urban flags) join through the
// dataset; unjoinable records raise DataIntegrity.
std::vector<std::pair<std::string, std::vector<PredictionRecord>>> stratify(
    std::span<const PredictionRecord> records, const MonitorDataset& monitors, Strategy strategy);

struct ReportRow {
  std::string method;
  std::string strategy;
  std::string stratum;
  Metrics metrics;
  double obs_mean = 0.0;  // observed concentration within the stratum
  double obs_sd = 0.0;
};

struct EvalReport {
  std::vector<ReportRow> rows;

  const ReportRow* find(const std::string& method, const std::string& strategy,
                        const std::string& stratum) const;
};

// Full per-method, per-stratum table over the given strategies. With
// `day_averaged` RMSE and MAD are computed per day and averaged across days
// instead of grand-pooled (correlation and coverage stay pooled).
EvalReport build_report(std::span<const PredictionRecord> records, const MonitorDataset& monitors,
                        std::span<const Strategy> strategies, bool day_averaged = false);

struct BenchmarkOptions {
  std::vector<MethodKind> methods{MethodKind::UkCmaq, MethodKind::Idw, MethodKind::RandomForest,
                                  MethodKind::OlsBoth};
  int k_folds = 5;
  std::uint64_t seed = 1;
  int workers = 1;
  bool day_averaged = false;

  std::vector<std::string> covariates;  // empty: every grid covariate
  std::vector<double> idw_phi_grid = default_phi_grid();
  std::optional<double> idw_cutoff_km;
  ForestConfig forest;  // per-fold seeds derived from `seed`
  DownscalerPriors priors;
  McmcConfig mcmc;
  UkPipelineOptions uk;
};

struct MethodLog {
  std::string method;
  long skipped_records = 0;  // held-out site-days with no usable prediction
  int skipped_days = 0;
  int ml_days = 0;            // kriging only
  int gls_fallback_days = 0;  // kriging only
  int ols_fallback_days = 0;  // intercept-only regression days
};

struct BenchmarkResult {
  FoldPlan folds;
  std::vector<PredictionRecord> records;
  std::vector<MethodLog> logs;
  EvalReport report;
};

// Pooled regression-feature rows (lon, lat, day of year, covariates, model
// output) for the given sites, in canonical (site id, day) order so that the
// dataset's storage order cannot influence seeded row sampling.
struct AssembledRows {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::pair<int, int>> site_day;  // dataset indices per row
};
AssembledRows assemble_feature_rows(const MonitorDataset& monitors, const GridDataset& grid,
                                    std::span<const int> sites,
                                    std::span<const std::string> covariates);

// Site-level k-fold cross validation: every method trains on the sites
// outside the fold and predicts every held-out site-day. Per-day failures
// degrade along the documented ladder and are counted, never silently
// dropped. Deterministic for a given seed and independent of `workers`.
BenchmarkResult run_benchmark(const MonitorDataset& monitors, const GridDataset& grid,
                              const BenchmarkOptions& options);

void write_records_csv(const std::string& path, std::span<const PredictionRecord> records);
std::vector<PredictionRecord> read_records_csv(const std::string& path);
// Re-attach dataset indices and observed values to records read from disk.
void resolve_records(std::vector<PredictionRecord>& records, const MonitorDataset& monitors);

struct ExternalScore {
  EvalReport report;
  std::vector<PredictionRecord> records;
  long missing_records = 0;  // observed site-days without a prediction row
};

// Scores predictions produced outside the harness. Schema:
// method,site_id,date,predicted,variance,lower95,upper95 (optionals blank).
// A prediction for a site that the fold plan never held out is a leakage
// error; predictions must reference observed site-days.
ExternalScore score_external(const std::string& predictions_csv, const MonitorDataset& monitors,
                             const FoldPlan& folds, bool day_averaged = false);

void write_report_csv(const std::string& path, const EvalReport& report);
// Paper-style table for one strategy: overall lists RMSE/MAD/Corr/Coverage per
// method, other strategies list RMSE per stratum with an observed mean (sd)
// footer row.
void write_strategy_table_csv(const std::string& path, const EvalReport& report, Strategy strategy);

}  // namespace airfuse
