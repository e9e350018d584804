#include "airfuse/idw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "airfuse/folds.hpp"

namespace airfuse {

void IdwConfig::validate() const {
  if (!(phi > 0.0)) throw InvalidArgument("idw: phi must be positive");
  if (cutoff_km && !(*cutoff_km > 0.0)) throw InvalidArgument("idw: cutoff must be positive");
}

double idw_predict(std::span<const LonLat> train_locs, const Eigen::VectorXd& train_values,
                   const LonLat& target, const IdwConfig& cfg) {
  cfg.validate();
  if (train_locs.size() != static_cast<std::size_t>(train_values.size())) {
    throw InvalidArgument("idw: location/value size mismatch");
  }

  // exact-match handling: d = 0 dominates every finite weight
  double exact_sum = 0.0;
  int exact_count = 0;
  std::vector<double> log_w;
  std::vector<double> values;
  log_w.reserve(train_locs.size());
  values.reserve(train_locs.size());
  for (std::size_t i = 0; i < train_locs.size(); ++i) {
    const double d = haversine_km(target, train_locs[i]);
    if (cfg.cutoff_km && d > *cfg.cutoff_km) continue;
    if (d == 0.0) {
      exact_sum += train_values(static_cast<Eigen::Index>(i));
      ++exact_count;
      continue;
    }
    log_w.push_back(-cfg.phi * std::log(d));
    values.push_back(train_values(static_cast<Eigen::Index>(i)));
  }
  if (exact_count > 0) return exact_sum / exact_count;
  if (log_w.empty()) throw NoNeighbor("idw: no active training observation within range");

  const double m = *std::max_element(log_w.begin(), log_w.end());
  double wsum = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    const double w = std::exp(log_w[i] - m);
    wsum += w;
    acc += w * values[i];
  }
  return acc / wsum;
}

IdwTuneResult idw_tune_phi(const MonitorDataset& data, std::span<const double> phi_grid,
                           int k_folds, std::uint64_t seed, std::optional<double> cutoff_km) {
  if (phi_grid.empty()) throw InvalidArgument("idw tune: empty phi grid");
  for (double phi : phi_grid) {
    if (!(phi > 0.0)) throw InvalidArgument("idw tune: phi values must be positive");
  }
  const FoldPlan plan = make_site_folds(data.n_sites(), k_folds, seed);

  IdwTuneResult result;
  result.phi_grid.assign(phi_grid.begin(), phi_grid.end());
  std::sort(result.phi_grid.begin(), result.phi_grid.end());  // ascending, for the tie rule
  phi_grid = result.phi_grid;
  result.rmse.assign(phi_grid.size(), 0.0);

  std::vector<double> sse(phi_grid.size(), 0.0);
  long count = 0;
  for (int t = 0; t < data.n_days(); ++t) {
    const std::vector<int> active = data.active_sites(t);
    for (int f = 0; f < plan.k; ++f) {
      std::vector<LonLat> train_locs;
      std::vector<double> train_vals;
      std::vector<int> test_sites;
      for (int s : active) {
        if (plan.fold_of_site[s] == f) {
          test_sites.push_back(s);
        } else {
          train_locs.push_back(data.site(s).loc);
          train_vals.push_back(*data.observation(s, t));
        }
      }
      if (test_sites.empty()) continue;
      const Eigen::VectorXd train_y =
          Eigen::Map<const Eigen::VectorXd>(train_vals.data(), static_cast<Eigen::Index>(train_vals.size()));
      for (int s : test_sites) {
        const LonLat target = data.site(s).loc;
        const double observed = *data.observation(s, t);
        bool usable = true;
        for (std::size_t pi = 0; pi < phi_grid.size(); ++pi) {
          IdwConfig cfg{phi_grid[pi], cutoff_km};
          try {
            const double pred = idw_predict(train_locs, train_y, target, cfg);
            sse[pi] += (pred - observed) * (pred - observed);
          } catch (const NoNeighbor&) {
            usable = false;
            break;
          }
        }
        if (usable) {
          ++count;
        } else {
          ++result.skipped_records;
        }
      }
    }
  }
  if (count == 0) throw InsufficientData("idw tune: no scorable site-days");

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t pi = 0; pi < phi_grid.size(); ++pi) {
    result.rmse[pi] = std::sqrt(sse[pi] / static_cast<double>(count));
    if (result.rmse[pi] < best) {  // strict: ties keep the smaller phi
      best = result.rmse[pi];
      result.best_phi = phi_grid[pi];
    }
  }
  return result;
}

}  // namespace airfuse
