// Command-line front end: synthetic data generation, variable selection,
// method fitting, gridded prediction maps, cross-validation and reporting.

#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "airfuse/ascii_grid.hpp"
#include "airfuse/csv.hpp"
#include "airfuse/eval.hpp"
#include "airfuse/ingest.hpp"
#include "airfuse/rng.hpp"
#include "airfuse/runconfig.hpp"
#include "airfuse/stats.hpp"

namespace fs = std::filesystem;
using namespace airfuse;

namespace {

// Every key a config file may define; unknown keys are rejected.
const std::vector<std::string> kKnownKeys = {
    "data.monitors", "data.grid", "data.grid_meta",
    "synth.n_sites", "synth.n_days", "synth.grid_rows", "synth.grid_cols", "synth.cell_km",
    "synth.origin_lon", "synth.origin_lat", "synth.nugget", "synth.partial_sill", "synth.range_km",
    "synth.beta_intercept", "synth.beta_cmaq", "synth.beta_covariates",
    "synth.day_constant_fraction", "synth.z_base", "synth.z_amplitude", "synth.z_noise_sd",
    "synth.covariate_noise_sd", "synth.urban_fraction", "synth.start_date",
    "cv.k", "cv.methods", "cv.day_averaged", "cv.covariates",
    "idw.phi_grid", "idw.cutoff_km", "idw.tune_k",
    "uk.bins", "uk.max_lag_km", "uk.shared_cov", "uk.transform", "uk.max_evals",
    "downscaler.n_iter", "downscaler.n_burn", "downscaler.thin", "downscaler.step",
    "downscaler.beta_variance", "downscaler.ig_shape", "downscaler.ig_scale",
    "downscaler.decay_lo", "downscaler.decay_hi", "downscaler.predict_draws",
    "rf.n_trees", "rf.m_try", "rf.min_leaf", "rf.max_depth",
    "select.max_size", "select.k",
    "seed", "workers", "out",
};

struct Context {
  RunConfig cfg;
  std::string config_path;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out = ".";
  std::string monitors_path, grid_path, grid_meta_path;

  void finalize() {
    if (!config_path.empty()) {
      cfg = RunConfig::parse_file(config_path);
      cfg.check_known_keys(kKnownKeys);
      seed = static_cast<std::uint64_t>(cfg.get_long("seed", static_cast<long>(seed)));
      workers = static_cast<int>(cfg.get_long("workers", workers));
      out = cfg.get_or("out", out);
      if (monitors_path.empty()) monitors_path = cfg.get_or("data.monitors", "");
      if (grid_path.empty()) grid_path = cfg.get_or("data.grid", "");
      if (grid_meta_path.empty()) grid_meta_path = cfg.get_or("data.grid_meta", "");
    }
    fs::create_directories(out);
  }

  std::string out_file(const std::string& name) const { return (fs::path(out) / name).string(); }

  MonitorDataset load_monitors() const {
    if (monitors_path.empty()) {
      throw ConfigError("no monitor file given (--monitors or data.monitors)");
    }
    return load_monitor_csv(monitors_path);
  }
  GridDataset load_grid() const {
    if (grid_path.empty() || grid_meta_path.empty()) {
      throw ConfigError("no grid files given (--grid/--grid-meta or data.grid/data.grid_meta)");
    }
    return load_grid_csv(grid_meta_path, grid_path);
  }

  SyntheticConfig synth_config() const {
    SyntheticConfig s;
    s.n_sites = static_cast<int>(cfg.get_long("synth.n_sites", s.n_sites));
    s.n_days = static_cast<int>(cfg.get_long("synth.n_days", s.n_days));
    s.grid_rows = static_cast<int>(cfg.get_long("synth.grid_rows", s.grid_rows));
    s.grid_cols = static_cast<int>(cfg.get_long("synth.grid_cols", s.grid_cols));
    s.cell_km = cfg.get_double("synth.cell_km", s.cell_km);
    s.origin.lon = cfg.get_double("synth.origin_lon", s.origin.lon);
    s.origin.lat = cfg.get_double("synth.origin_lat", s.origin.lat);
    s.nugget = cfg.get_double("synth.nugget", s.nugget);
    s.partial_sill = cfg.get_double("synth.partial_sill", s.partial_sill);
    s.range_km = cfg.get_double("synth.range_km", s.range_km);
    s.beta_intercept = cfg.get_double("synth.beta_intercept", s.beta_intercept);
    s.beta_cmaq = cfg.get_double("synth.beta_cmaq", s.beta_cmaq);
    s.day_constant_fraction =
        cfg.get_double("synth.day_constant_fraction", s.day_constant_fraction);
    s.z_base = cfg.get_double("synth.z_base", s.z_base);
    s.z_amplitude = cfg.get_double("synth.z_amplitude", s.z_amplitude);
    s.z_noise_sd = cfg.get_double("synth.z_noise_sd", s.z_noise_sd);
    s.covariate_noise_sd = cfg.get_double("synth.covariate_noise_sd", s.covariate_noise_sd);
    s.urban_fraction = cfg.get_double("synth.urban_fraction", s.urban_fraction);
    if (const auto d = cfg.get("synth.start_date")) s.start_date = parse_date(*d);
    if (cfg.has("synth.beta_covariates")) {
      s.beta_covariates.clear();
      for (const std::string& b : cfg.get_list("synth.beta_covariates")) {
        s.beta_covariates.push_back(std::stod(b));
      }
    } else {
      s.beta_covariates = {0.0, 0.0, 0.0};
    }
    s.seed = seed;
    return s;
  }

  McmcConfig mcmc_config() const {
    McmcConfig m;
    m.n_iter = static_cast<int>(cfg.get_long("downscaler.n_iter", m.n_iter));
    m.n_burn = static_cast<int>(cfg.get_long("downscaler.n_burn", m.n_burn));
    m.thin = static_cast<int>(cfg.get_long("downscaler.thin", m.thin));
    m.initial_step = cfg.get_double("downscaler.step", m.initial_step);
    m.seed = seed;
    return m;
  }

  DownscalerPriors priors() const {
    DownscalerPriors p;
    const double bv = cfg.get_double("downscaler.beta_variance", p.beta_variance(0));
    p.beta_variance << bv, bv;
    p.nugget_shape = p.sill_shape = cfg.get_double("downscaler.ig_shape", p.nugget_shape);
    p.nugget_scale = p.sill_scale = cfg.get_double("downscaler.ig_scale", p.nugget_scale);
    p.decay_lo = cfg.get_double("downscaler.decay_lo", p.decay_lo);
    p.decay_hi = cfg.get_double("downscaler.decay_hi", p.decay_hi);
    return p;
  }

  ForestConfig forest_config() const {
    ForestConfig f;
    f.n_trees = static_cast<int>(cfg.get_long("rf.n_trees", f.n_trees));
    f.m_try = static_cast<int>(cfg.get_long("rf.m_try", f.m_try));
    f.min_leaf = static_cast<int>(cfg.get_long("rf.min_leaf", f.min_leaf));
    f.max_depth = static_cast<int>(cfg.get_long("rf.max_depth", f.max_depth));
    f.seed = seed;
    return f;
  }

  UkPipelineOptions uk_options() const {
    UkPipelineOptions u;
    u.variogram_bins = static_cast<int>(cfg.get_long("uk.bins", u.variogram_bins));
    u.variogram_max_lag_km = cfg.get_double("uk.max_lag_km", u.variogram_max_lag_km);
    u.shared_cov = cfg.get_bool("uk.shared_cov", u.shared_cov);
    u.fit.transform = parse_transform(cfg.get_or("uk.transform", "none"));
    u.fit.max_evals = static_cast<int>(cfg.get_long("uk.max_evals", u.fit.max_evals));
    return u;
  }

  std::vector<double> idw_phi_grid() const {
    const auto list = cfg.get_list("idw.phi_grid");
    if (list.empty()) return default_phi_grid();
    std::vector<double> grid;
    for (const std::string& v : list) grid.push_back(std::stod(v));
    return grid;
  }

  std::vector<std::string> pick_covariates(const GridDataset& grid) const {
    const auto list = cfg.get_list("cv.covariates");
    return list.empty() ? grid.covariate_names() : list;
  }
};

std::vector<int> all_site_indices(const MonitorDataset& monitors) {
  std::vector<int> idx(monitors.n_sites());
  for (int i = 0; i < monitors.n_sites(); ++i) idx[i] = i;
  return idx;
}

MeanSpec spec_from_name(const std::string& name, const std::vector<std::string>& covs) {
  if (name == "cmaq") return MeanSpec::cmaq_only();
  if (name == "covs") return MeanSpec::covs_only(covs);
  if (name == "both") return MeanSpec::cmaq_plus_covs(covs);
  throw ConfigError("unknown spec '" + name + "' (expected cmaq, covs or both)");
}

int cmd_synth(Context& ctx, long n_sites_flag, long n_days_flag) {
  SyntheticConfig cfg = ctx.synth_config();
  if (n_sites_flag >= 0) cfg.n_sites = static_cast<int>(n_sites_flag);
  if (n_days_flag >= 0) cfg.n_days = static_cast<int>(n_days_flag);
  const SyntheticData data = generate_synthetic(cfg);
  write_monitor_csv(ctx.out_file("monitors.csv"), data.monitors);
  write_grid_meta_csv(ctx.out_file("grid-meta.csv"), data.grid.geometry());
  write_grid_csv(ctx.out_file("grid.csv"), data.grid);
  write_truth_csv(ctx.out_file("truth.csv"), data);
  std::cout << "synth: " << cfg.n_sites << " sites x " << cfg.n_days << " days, grid "
            << cfg.grid_rows << "x" << cfg.grid_cols << " -> " << ctx.out << "\n";
  return 0;
}

int cmd_select_vars(Context& ctx) {
  const MonitorDataset monitors = ctx.load_monitors();
  const GridDataset grid = ctx.load_grid();
  const auto candidates = grid.covariate_names();
  const int max_size =
      static_cast<int>(ctx.cfg.get_long("select.max_size", static_cast<long>(candidates.size())));
  const int k = static_cast<int>(ctx.cfg.get_long("select.k", 5));
  const BestSubsetResult sel = best_subset_select(monitors, grid, candidates, max_size, k, ctx.seed);

  CsvWriter w(ctx.out_file("selection.csv"));
  w.raw_line("size,predictors,cv_rmse,chosen");
  for (std::size_t size = 0; size < sel.cv_rmse.size(); ++size) {
    if (std::isnan(sel.cv_rmse[size])) continue;
    std::string preds;
    if (size > 0 && size < sel.best_by_size.size()) {
      for (const std::string& p : sel.best_by_size[size]) {
        if (!preds.empty()) preds += ';';
        preds += p;
      }
    }
    w.row({std::to_string(size), preds, format_full(sel.cv_rmse[size]),
           static_cast<int>(size) == sel.chosen_size ? "1" : "0"});
  }
  std::cout << "select-vars: chose " << sel.chosen_size << " predictors -> "
            << ctx.out_file("selection.csv") << "\n";
  return 0;
}

int cmd_tune_idw(Context& ctx) {
  const MonitorDataset monitors = ctx.load_monitors();
  const auto grid = ctx.idw_phi_grid();
  std::optional<double> cutoff;
  if (ctx.cfg.has("idw.cutoff_km")) cutoff = ctx.cfg.get_double("idw.cutoff_km", 0.0);
  const int k = static_cast<int>(ctx.cfg.get_long("idw.tune_k", 5));
  const IdwTuneResult tuned = idw_tune_phi(monitors, grid, k, ctx.seed, cutoff);
  CsvWriter w(ctx.out_file("idw_tuning.csv"));
  w.raw_line("phi,cv_rmse,best");
  for (std::size_t i = 0; i < tuned.phi_grid.size(); ++i) {
    w.row({format_full(tuned.phi_grid[i]), format_full(tuned.rmse[i]),
           tuned.phi_grid[i] == tuned.best_phi ? "1" : "0"});
  }
  std::cout << "tune-idw: best phi " << tuned.best_phi << " (skipped " << tuned.skipped_records
            << " records)\n";
  return 0;
}

int cmd_fit(Context& ctx, const std::string& method, const std::string& spec_name,
            bool shared_cov, const std::string& samples_out) {
  const MonitorDataset monitors = ctx.load_monitors();
  const GridDataset grid = ctx.load_grid();
  const auto covs = ctx.pick_covariates(grid);
  const std::vector<int> sites = all_site_indices(monitors);

  if (method == "ols") {
    const MeanSpec spec = spec_from_name(spec_name, covs);
    const auto names = design_names(spec);
    CsvWriter w(ctx.out_file("ols_params.csv"));
    std::string header = "day,date";
    for (const auto& n : names) header += "," + n;
    header += ",resid_var";
    w.raw_line(header);
    for (int t = 0; t < monitors.n_days(); ++t) {
      const DayTable tab = make_day_table(monitors, grid, t, sites);
      if (tab.n() <= spec.n_regressors() + 1) continue;
      OlsFit fit;
      try {
        fit = ols_fit_day(tab, spec);
      } catch (const SingularDesign&) {
        continue;
      }
      std::vector<std::string> row{std::to_string(t), format_date(monitors.date(t))};
      for (Eigen::Index j = 0; j < fit.coefficients.size(); ++j) {
        row.push_back(format_full(fit.coefficients(j)));
      }
      row.push_back(format_full(fit.residual_variance));
      w.row(row);
    }
    std::cout << "fit: wrote " << ctx.out_file("ols_params.csv") << "\n";
    return 0;
  }

  if (method == "uk") {
    const MeanSpec spec = spec_from_name(spec_name, covs);
    const auto names = design_names(spec);
    UkPipelineOptions uk = ctx.uk_options();
    uk.shared_cov = uk.shared_cov || shared_cov;
    const UkDayFits fits = uk_fit_days(monitors, grid, spec, sites, uk, ctx.workers);
    CsvWriter w(ctx.out_file("uk_params.csv"));
    std::string header = "day,date";
    for (const auto& n : names) header += "," + n;
    header += ",tau2,sigma2,phi,loglik,ml";
    w.raw_line(header);
    for (int t = 0; t < monitors.n_days(); ++t) {
      if (!fits.models[t]) continue;
      const KrigingModel& m = *fits.models[t];
      std::vector<std::string> row{std::to_string(t), format_date(monitors.date(t))};
      for (Eigen::Index j = 0; j < m.coefficients.size(); ++j) {
        row.push_back(format_full(m.coefficients(j)));
      }
      row.push_back(format_full(m.params.nugget));
      row.push_back(format_full(m.params.partial_sill));
      row.push_back(format_full(m.params.range_km));
      row.push_back(format_full(m.loglik));
      row.push_back(m.ml_refit ? "1" : "0");
      w.row(row);
    }
    std::cout << "fit: " << fits.ml_days << " ML days, " << fits.gls_fallback_days
              << " GLS fallback days, " << fits.skipped_days << " skipped -> "
              << ctx.out_file("uk_params.csv") << "\n";
    return 0;
  }

  if (method == "downscaler") {
    const DownscalerPriors priors = ctx.priors();
    const McmcConfig base = ctx.mcmc_config();
    CsvWriter w(ctx.out_file("downscaler_summary.csv"));
    w.raw_line("day,date,parameter,mean,sd,q2.5,q97.5,acceptance");
    std::ofstream samples;
    if (!samples_out.empty()) {
      samples.open(samples_out, std::ios::binary);
      if (!samples) throw IoError("cannot open '" + samples_out + "' for writing");
      samples.write("AFDS1", 5);
    }
    for (int t = 0; t < monitors.n_days(); ++t) {
      const DayTable tab = make_day_table(monitors, grid, t, sites);
      if (tab.n() < 5) continue;
      McmcConfig mcmc = base;
      mcmc.seed = derive_seed(ctx.seed, 0xD5C0 + static_cast<std::uint64_t>(t));
      const DownscalerPosterior post = downscaler_fit(tab, priors, mcmc);
      const auto summary = [&](const std::string& name, const Eigen::VectorXd& samples_vec) {
        std::vector<double> v(samples_vec.data(), samples_vec.data() + samples_vec.size());
        w.row({std::to_string(t), format_date(monitors.date(t)), name,
               format_full(samples_vec.mean()), format_full(sample_sd(samples_vec)),
               format_full(quantile_type7(v, 0.025)), format_full(quantile_type7(v, 0.975)),
               format_full(post.acceptance_rate)});
      };
      summary("beta0", post.beta0);
      summary("beta1", post.beta1);
      summary("tau2", post.nugget);
      summary("sigma0_2", post.sill);
      summary("phi0", post.decay);
      if (samples.is_open()) {
        // per day: day index, sample count, then the five parameter chains
        const std::int32_t day32 = t;
        const std::int32_t kept32 = post.n_kept();
        samples.write(reinterpret_cast<const char*>(&day32), sizeof(day32));
        samples.write(reinterpret_cast<const char*>(&kept32), sizeof(kept32));
        for (const Eigen::VectorXd* chain :
             {&post.beta0, &post.beta1, &post.nugget, &post.sill, &post.decay}) {
          samples.write(reinterpret_cast<const char*>(chain->data()),
                        static_cast<std::streamsize>(sizeof(double) * chain->size()));
        }
      }
    }
    if (samples.is_open() && !samples) throw IoError("write failure on '" + samples_out + "'");
    std::cout << "fit: wrote " << ctx.out_file("downscaler_summary.csv") << "\n";
    return 0;
  }

  if (method == "rf") {
    std::vector<FeatureRow> rows;
    std::vector<double> y;
    std::vector<int> ordered = sites;
    std::sort(ordered.begin(), ordered.end(), [&](int a, int b) {
      return monitors.site(a).id < monitors.site(b).id;
    });
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
        r.covariates.resize(static_cast<Eigen::Index>(covs.size()));
        for (std::size_t j = 0; j < covs.size(); ++j) {
          const auto idx = grid.covariate_index(covs[j]);
          if (!idx) throw MissingCovariate("fit: covariate '" + covs[j] + "' not in grid");
          r.covariates(static_cast<Eigen::Index>(j)) = grid.covariate(cell, t, *idx);
        }
        r.model_output = grid.model_output(cell, t);
        rows.push_back(std::move(r));
        y.push_back(*v);
      }
    }
    const Eigen::MatrixXd x = feature_matrix(rows);
    const Eigen::VectorXd yv =
        Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    const Forest forest = rf_train(x, yv, ctx.forest_config(), ctx.workers);
    forest.save(ctx.out_file("forest.bin"));
    const ForestConfig& echo = forest.config();
    std::cout << "fit: rf config echo: n_trees=" << echo.n_trees << " m_try=" << echo.m_try
              << " (p=" << forest.n_features() << ") min_leaf=" << echo.min_leaf
              << " max_depth=" << echo.max_depth << " bootstrap=" << (echo.bootstrap ? 1 : 0)
              << "\n";
    std::cout << "fit: wrote " << ctx.out_file("forest.bin") << "\n";
    return 0;
  }

  throw ConfigError("unknown method '" + method + "' (expected ols, uk, downscaler or rf)");
}

int cmd_predict_grid(Context& ctx, const std::string& method, const std::string& spec_name,
                     const std::string& date_str, bool log_scale, const std::string& model_path,
                     double idw_phi) {
  const MonitorDataset monitors = ctx.load_monitors();
  const GridDataset grid = ctx.load_grid();
  const Date date = parse_date(date_str);
  const auto day_opt = monitors.find_day(date);
  if (!day_opt || !grid.find_day(date)) {
    throw ConfigError("predict-grid: no data for " + date_str);
  }
  const int day = *day_opt;
  const auto covs = ctx.pick_covariates(grid);
  const std::vector<int> sites = all_site_indices(monitors);
  const DayTable cells = make_cell_table(grid, day);

  Eigen::VectorXd mean(cells.n());
  Eigen::VectorXd variance;

  if (method == "idw") {
    const DayTable train = make_day_table(monitors, grid, day, sites);
    if (train.n() == 0) throw InsufficientData("predict-grid: no observations on " + date_str);
    const IdwConfig cfg{idw_phi, std::nullopt};
    for (int i = 0; i < cells.n(); ++i) {
      mean(i) = idw_predict(train.locs, train.y, cells.locs[i], cfg);
    }
  } else if (method == "uk") {
    const MeanSpec spec = spec_from_name(spec_name, covs);
    const UkDayFits fits = uk_fit_days(monitors, grid, spec, sites, ctx.uk_options(), ctx.workers);
    if (!fits.models[day]) throw InsufficientData("predict-grid: no usable model for " + date_str);
    const KrigingPrediction pred = uk_predict(*fits.models[day], cells);
    mean = pred.mean;
    variance = pred.variance;
  } else if (method == "ols") {
    const MeanSpec spec = spec_from_name(spec_name, covs);
    const DayTable train = make_day_table(monitors, grid, day, sites);
    const OlsFit fit = ols_fit_day(train, spec);
    const IntervalPrediction pred = ols_predict(fit, cells);
    mean = pred.mean;
    variance = pred.variance;
  } else if (method == "downscaler") {
    const DayTable train = make_day_table(monitors, grid, day, sites);
    McmcConfig mcmc = ctx.mcmc_config();
    mcmc.seed = derive_seed(ctx.seed, 0xD5C0 + static_cast<std::uint64_t>(day));
    const DownscalerPosterior post = downscaler_fit(train, ctx.priors(), mcmc);
    const int draws = static_cast<int>(ctx.cfg.get_long("downscaler.predict_draws", 500));
    const DownscalerPrediction pred = downscaler_predict(post, cells, draws);
    mean = pred.median;
    variance = pred.variance;
  } else if (method == "rf") {
    if (model_path.empty()) {
      throw ConfigError("predict-grid rf requires --model forest.bin (run `fit --method rf`)");
    }
    const Forest forest = Forest::load(model_path);
    const int p = 3 + static_cast<int>(covs.size()) + 1;
    if (p != forest.n_features()) {
      throw ConfigError("predict-grid: forest expects " + std::to_string(forest.n_features()) +
                        " features, grid provides " + std::to_string(p));
    }
    Eigen::RowVectorXd row(p);
    variance.resize(cells.n());
    for (int i = 0; i < cells.n(); ++i) {
      row(0) = cells.locs[i].lon;
      row(1) = cells.locs[i].lat;
      row(2) = day_of_year(cells.date);
      for (std::size_t j = 0; j < covs.size(); ++j) {
        const auto idx = grid.covariate_index(covs[j]);
        if (!idx) throw MissingCovariate("predict-grid: covariate '" + covs[j] + "' not in grid");
        row(3 + static_cast<Eigen::Index>(j)) = cells.x(i, *idx);
      }
      row(p - 1) = cells.z(i);
      const ForestPrediction pred = rf_predict(forest, row);
      mean(i) = pred.mean;
      variance(i) = pred.variance;
    }
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }

  if (log_scale) {
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
      mean(i) = mean(i) > 0.0 ? std::log(mean(i)) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  const std::string stem = method + "_" + date_str + (log_scale ? "_log" : "");
  write_ascii_grid(ctx.out_file(stem + ".asc"), grid.geometry(), mean);
  if (variance.size() > 0 && !log_scale) {
    write_ascii_grid(ctx.out_file(stem + "_var.asc"), grid.geometry(), variance);
  }
  std::cout << "predict-grid: wrote " << ctx.out_file(stem + ".asc") << "\n";
  return 0;
}

int cmd_cv(Context& ctx, const std::string& methods_arg, int k_flag, bool shared_cov) {
  const MonitorDataset monitors = ctx.load_monitors();
  const GridDataset grid = ctx.load_grid();

  BenchmarkOptions opts;
  opts.seed = ctx.seed;
  opts.workers = ctx.workers;
  opts.k_folds = k_flag > 0 ? k_flag : static_cast<int>(ctx.cfg.get_long("cv.k", 5));
  opts.day_averaged = ctx.cfg.get_bool("cv.day_averaged", false);
  opts.covariates = ctx.pick_covariates(grid);
  opts.idw_phi_grid = ctx.idw_phi_grid();
  if (ctx.cfg.has("idw.cutoff_km")) opts.idw_cutoff_km = ctx.cfg.get_double("idw.cutoff_km", 0.0);
  opts.forest = ctx.forest_config();
  opts.priors = ctx.priors();
  opts.mcmc = ctx.mcmc_config();
  opts.uk = ctx.uk_options();
  opts.uk.shared_cov = opts.uk.shared_cov || shared_cov;

  std::string methods_str = methods_arg;
  if (methods_str.empty()) methods_str = ctx.cfg.get_or("cv.methods", "uk-cmaq,idw,rf,ols-both");
  opts.methods.clear();
  std::istringstream ms(methods_str);
  std::string item;
  while (std::getline(ms, item, ',')) {
    if (!item.empty()) opts.methods.push_back(parse_method(item));
  }

  const BenchmarkResult result = run_benchmark(monitors, grid, opts);
  write_foldplan_csv(ctx.out_file("foldplan.csv"), result.folds, monitors);
  write_records_csv(ctx.out_file("records.csv"), result.records);
  write_report_csv(ctx.out_file("report.csv"), result.report);
  for (const MethodLog& log : result.logs) {
    std::cout << "cv: " << log.method << ": skipped_records=" << log.skipped_records
              << " skipped_days=" << log.skipped_days << " ml_days=" << log.ml_days
              << " gls_fallback_days=" << log.gls_fallback_days
              << " ols_fallback_days=" << log.ols_fallback_days << "\n";
  }
  std::cout << "cv: wrote " << ctx.out_file("report.csv") << "\n";
  return 0;
}

int cmd_score_external(Context& ctx, const std::string& predictions, const std::string& foldplan) {
  const MonitorDataset monitors = ctx.load_monitors();
  const FoldPlan plan = read_foldplan_csv(foldplan, monitors);
  const ExternalScore score =
      score_external(predictions, monitors, plan, ctx.cfg.get_bool("cv.day_averaged", false));
  write_report_csv(ctx.out_file("report_external.csv"), score.report);
  std::cout << "score-external: " << score.records.size() << " records scored, "
            << score.missing_records << " observed site-days without predictions\n";
  std::cout << "score-external: wrote " << ctx.out_file("report_external.csv") << "\n";
  return 0;
}

int cmd_report(Context& ctx, const std::string& records_path, const std::string& strategies_arg) {
  const MonitorDataset monitors = ctx.load_monitors();
  std::vector<PredictionRecord> records = read_records_csv(records_path);
  if (records.empty()) throw DataIntegrity("report: no records in " + records_path);
  resolve_records(records, monitors);

  std::vector<Strategy> strategies;
  std::istringstream ss(strategies_arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) strategies.push_back(parse_strategy(item));
  }
  if (strategies.empty()) strategies = all_strategies();

  const EvalReport report =
      build_report(records, monitors, strategies, ctx.cfg.get_bool("cv.day_averaged", false));
  for (Strategy s : strategies) {
    const std::string path = ctx.out_file("table_" + strategy_name(s) + ".csv");
    write_strategy_table_csv(path, report, s);
    std::cout << "report: wrote " << path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"airfuse: geostatistical data fusion for daily pollutant mapping"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  Context ctx;
  app.add_option("--config", ctx.config_path, "sectioned key=value configuration file");
  app.add_option("--seed", ctx.seed, "master random seed (default 1)");
  app.add_option("--workers", ctx.workers, "parallel worker threads (default 1)");
  app.add_option("--out", ctx.out, "output directory (default .)");
  app.add_option("--monitors", ctx.monitors_path, "monitors.csv path");
  app.add_option("--grid", ctx.grid_path, "grid.csv path");
  app.add_option("--grid-meta", ctx.grid_meta_path, "grid-meta.csv path");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with known truth");
  long synth_sites = -1, synth_days = -1;
  synth->add_option("--n-sites", synth_sites, "number of monitor sites (default 60)");
  synth->add_option("--n-days", synth_days, "number of days (default 40)");

  auto* select = app.add_subcommand("select-vars", "best-subset variable selection via site CV");
  auto* tune = app.add_subcommand("tune-idw", "cross-validate the IDW decay exponent");

  auto* fit = app.add_subcommand("fit", "fit one method on the full dataset");
  std::string fit_method = "uk", fit_spec = "cmaq", fit_samples_out;
  bool fit_shared_cov = false;
  fit->add_option("--method", fit_method, "ols | uk | downscaler | rf (default uk)");
  fit->add_option("--spec", fit_spec, "mean specification: cmaq | covs | both (default cmaq)");
  fit->add_flag("--shared-cov", fit_shared_cov,
                "uk: share the WLS covariance across days instead of daily ML");
  fit->add_option("--samples-out", fit_samples_out,
                  "downscaler: also write raw posterior samples to this binary file");

  auto* pg = app.add_subcommand("predict-grid", "predict every grid cell for one day (ESRI ASCII)");
  std::string pg_method = "uk", pg_spec = "cmaq", pg_date, pg_model;
  bool pg_log = false;
  double pg_phi = 2.0;
  pg->add_option("--method", pg_method, "idw | ols | uk | downscaler | rf (default uk)");
  pg->add_option("--spec", pg_spec, "mean specification for ols/uk (default cmaq)");
  pg->add_option("--date", pg_date, "day to map, YYYY-MM-DD")->required();
  pg->add_option("--model", pg_model, "forest.bin for rf");
  pg->add_option("--idw-phi", pg_phi, "IDW decay exponent (default 2)");
  pg->add_flag("--log", pg_log, "write natural-log predictions");

  auto* cv = app.add_subcommand("cv", "site-level k-fold cross-validation benchmark");
  std::string cv_methods;
  int cv_k = -1;
  cv->add_option("--methods", cv_methods,
                 "comma list of ols-cmaq,ols-covs,ols-both,idw,uk-cmaq,uk-covs,uk-both,"
                 "downscaler,rf (default uk-cmaq,idw,rf,ols-both)");
  cv->add_option("--k", cv_k, "number of folds (default 5)");
  bool cv_shared_cov = false;
  cv->add_flag("--shared-cov", cv_shared_cov,
               "uk: share the WLS covariance across days instead of daily ML");

  auto* score = app.add_subcommand("score-external", "score externally produced predictions");
  std::string score_predictions, score_foldplan;
  score->add_option("--predictions", score_predictions, "external predictions csv")->required();
  score->add_option("--foldplan", score_foldplan, "foldplan.csv from the cv run")->required();

  auto* report = app.add_subcommand("report", "stratified tables from a records file");
  std::string report_records, report_strategies;
  report->add_option("--records", report_records, "records.csv from cv")->required();
  report->add_option("--strategies", report_strategies,
                     "comma list of overall,nearby,urban,level,distance,eastwest,season "
                     "(default all)");

  CLI11_PARSE(app, argc, argv);

  try {
    ctx.finalize();
    if (*synth) return cmd_synth(ctx, synth_sites, synth_days);
    if (*select) return cmd_select_vars(ctx);
    if (*tune) return cmd_tune_idw(ctx);
    if (*fit) return cmd_fit(ctx, fit_method, fit_spec, fit_shared_cov, fit_samples_out);
    if (*pg) return cmd_predict_grid(ctx, pg_method, pg_spec, pg_date, pg_log, pg_model, pg_phi);
    if (*cv) return cmd_cv(ctx, cv_methods, cv_k, cv_shared_cov);
    if (*score) return cmd_score_external(ctx, score_predictions, score_foldplan);
    if (*report) return cmd_report(ctx, report_records, report_strategies);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
