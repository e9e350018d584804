#include "airfuse/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "airfuse/parallel.hpp"
#include "airfuse/rng.hpp"

namespace airfuse {

int ForestConfig::resolved_m_try(int p) const {
  if (p < 1) throw InvalidArgument("forest: need at least one feature");
  int m = m_try > 0 ? m_try : p / 3;
  return std::clamp(m, 1, p);
}

void ForestConfig::validate() const {
  if (n_trees < 1) throw InvalidArgument("forest: n_trees must be at least 1");
  if (min_leaf < 1) throw InvalidArgument("forest: min_leaf must be at least 1");
  if (max_depth < 0) throw InvalidArgument("forest: max_depth must be non-negative");
}

Eigen::MatrixXd feature_matrix(std::span<const FeatureRow> rows) {
  if (rows.empty()) throw InvalidArgument("feature_matrix: no rows");
  const int p_cov = static_cast<int>(rows.front().covariates.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 3 + p_cov + 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const FeatureRow& r = rows[i];
    if (static_cast<int>(r.covariates.size()) != p_cov) {
      throw InvalidArgument("feature_matrix: uneven covariate widths");
    }
    x(i, 0) = r.lon;
    x(i, 1) = r.lat;
    x(i, 2) = static_cast<double>(r.day_of_year);
    x.row(i).segment(3, p_cov) = r.covariates.transpose();
    x(i, 3 + p_cov) = r.model_output;
    if (!x.row(i).allFinite()) throw InvalidArgument("feature_matrix: non-finite feature value");
  }
  return x;
}

std::vector<std::string> feature_names(std::span<const std::string> covariate_names) {
  std::vector<std::string> names{"lon", "lat", "day_of_year"};
  names.insert(names.end(), covariate_names.begin(), covariate_names.end());
  names.push_back("cmaq");
  return names;
}

double Tree::predict(const Eigen::RowVectorXd& row) const {
  int node = 0;
  while (feature[node] >= 0) {
    node = row(feature[node]) <= threshold[node] ? left[node] : right[node];
  }
  return value[node];
}

namespace {

struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  int m_try;
  int min_leaf;
  int max_depth;
  Rng& rng;
  Tree tree;

  int build(std::vector<long>& rows, int depth) {
    const int node = static_cast<int>(tree.feature.size());
    tree.feature.push_back(-1);
    tree.threshold.push_back(0.0);
    tree.left.push_back(-1);
    tree.right.push_back(-1);
    double sum = 0.0;
    for (long r : rows) sum += y(r);
    tree.value.push_back(sum / static_cast<double>(rows.size()));

    if (static_cast<long>(rows.size()) < 2 * min_leaf) return node;
    if (max_depth > 0 && depth >= max_depth) return node;

    // sample m_try distinct features
    const int p = static_cast<int>(x.cols());
    std::vector<int> features(p);
    std::iota(features.begin(), features.end(), 0);
    for (int i = 0; i < m_try; ++i) {
      std::swap(features[i], features[i + rng.uniform_index(p - i)]);
    }
    features.resize(m_try);
    std::sort(features.begin(), features.end());  // tie rule: lower feature index wins

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<long> order(rows);
    for (int f : features) {
      std::sort(order.begin(), order.end(), [&](long a, long b) {
        if (x(a, f) != x(b, f)) return x(a, f) < x(b, f);
        return a < b;
      });
      // prefix scan; candidate cuts between consecutive distinct values
      double left_sum = 0.0;
      double total = 0.0;
      for (long r : order) total += y(r);
      const long n = static_cast<long>(order.size());
      for (long i = 0; i + 1 < n; ++i) {
        left_sum += y(order[i]);
        const long n_left = i + 1;
        const long n_right = n - n_left;
        if (n_left < min_leaf || n_right < min_leaf) continue;
        if (x(order[i], f) == x(order[i + 1], f)) continue;
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / n_left + right_sum * right_sum / n_right;
        // strict improvement: the first candidate wins ties, and candidates
        // arrive ordered by (feature index, threshold)
        if (score > best_score) {
          best_score = score;
          best_feature = f;
          best_threshold = 0.5 * (x(order[i], f) + x(order[i + 1], f));
        }
      }
    }
    if (best_feature < 0) return node;

    std::vector<long> left_rows, right_rows;
    for (long r : rows) {
      (x(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    }
    if (static_cast<long>(left_rows.size()) < min_leaf ||
        static_cast<long>(right_rows.size()) < min_leaf) {
      return node;  // numeric edge: midpoint landed on a data value
    }
    tree.feature[node] = best_feature;
    tree.threshold[node] = best_threshold;
    tree.left[node] = build(left_rows, depth + 1);
    tree.right[node] = build(right_rows, depth + 1);
    return node;
  }
};

}  // namespace

Forest rf_train(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& config,
                int workers) {
  config.validate();
  const long n = x.rows();
  if (n == 0) throw InvalidArgument("forest: empty training data");
  if (y.size() != n) throw InvalidArgument("forest: response size mismatch");
  if (n < 2 * config.min_leaf) {
    throw InsufficientData("forest: need at least " + std::to_string(2 * config.min_leaf) +
                           " rows, have " + std::to_string(n));
  }
  const int p = static_cast<int>(x.cols());
  const int m_try = config.resolved_m_try(p);

  std::vector<Tree> trees(config.n_trees);
  std::vector<std::vector<std::uint8_t>> in_bag(config.n_trees);
  parallel_for(static_cast<std::size_t>(config.n_trees), workers, [&](std::size_t ti) {
    Rng rng(derive_seed(config.seed, 0x7EE5ULL + ti));
    std::vector<std::uint8_t> bag(n, 0);
    std::vector<long> rows;
    rows.reserve(n);
    if (config.bootstrap) {
      for (long i = 0; i < n; ++i) {
        const long r = static_cast<long>(rng.uniform_index(static_cast<std::size_t>(n)));
        rows.push_back(r);
        bag[r] = 1;
      }
      std::sort(rows.begin(), rows.end());
    } else {
      rows.resize(n);
      std::iota(rows.begin(), rows.end(), 0L);
      std::fill(bag.begin(), bag.end(), 1);
    }
    TreeBuilder builder{x, y, m_try, config.min_leaf, config.max_depth, rng, {}};
    builder.build(rows, 0);
    trees[ti] = std::move(builder.tree);
    in_bag[ti] = std::move(bag);
  });

  ForestConfig resolved = config;
  resolved.m_try = m_try;
  return Forest(std::move(trees), std::move(in_bag), p, resolved);
}

ForestPrediction rf_predict(const Forest& forest, const Eigen::RowVectorXd& row) {
  if (forest.n_trees() == 0) throw InvalidArgument("forest: no trees");
  if (row.size() != forest.n_features()) throw InvalidArgument("forest: feature width mismatch");
  const int k = forest.n_trees();
  double sum = 0.0, sumsq = 0.0;
  for (const Tree& t : forest.trees()) {
    const double v = t.predict(row);
    sum += v;
    sumsq += v * v;
  }
  ForestPrediction out;
  out.mean = sum / k;
  out.variance = k > 1 ? std::max(0.0, (sumsq - k * out.mean * out.mean) / (k - 1)) : 0.0;
  return out;
}

OobResult rf_oob_error(const Forest& forest, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const long n = x.rows();
  if (n != forest.n_train_rows()) {
    throw InvalidArgument("oob: row count differs from the training data");
  }
  std::vector<int> checkpoints;
  for (int c : {10, 50, 100, 250, 500}) {
    if (c < forest.n_trees()) checkpoints.push_back(c);
  }
  checkpoints.push_back(forest.n_trees());

  OobResult result;
  std::vector<double> sum(n, 0.0);
  std::vector<long> count(n, 0);
  int tree_idx = 0;
  for (int checkpoint : checkpoints) {
    for (; tree_idx < checkpoint; ++tree_idx) {
      const Tree& t = forest.trees()[tree_idx];
      for (long r = 0; r < n; ++r) {
        if (forest.in_bag(tree_idx, r)) continue;
        sum[r] += t.predict(x.row(r));
        count[r] += 1;
      }
    }
    double sse = 0.0;
    long scored = 0;
    for (long r = 0; r < n; ++r) {
      if (count[r] == 0) continue;
      const double e = sum[r] / count[r] - y(r);
      sse += e * e;
      ++scored;
    }
    OobCurvePoint pt;
    pt.n_trees = checkpoint;
    pt.rmse = scored > 0 ? std::sqrt(sse / scored) : std::numeric_limits<double>::quiet_NaN();
    result.curve.push_back(pt);
    if (checkpoint == forest.n_trees()) result.excluded_rows = n - scored;
  }
  return result;
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("forest file truncated");
  return v;
}

}  // namespace

void Forest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write("FMRF1", 5);
  write_pod<std::int32_t>(out, n_trees());
  write_pod<std::int32_t>(out, n_features_);
  write_pod<std::int32_t>(out, config_.m_try);
  write_pod<std::int32_t>(out, config_.min_leaf);
  write_pod<std::int32_t>(out, config_.max_depth);
  write_pod<std::uint8_t>(out, config_.bootstrap ? 1 : 0);
  write_pod<std::uint64_t>(out, config_.seed);
  write_pod<std::int64_t>(out, n_train_rows());
  for (int t = 0; t < n_trees(); ++t) {
    const Tree& tree = trees_[t];
    write_pod<std::int64_t>(out, static_cast<std::int64_t>(tree.feature.size()));
    for (std::size_t i = 0; i < tree.feature.size(); ++i) {
      write_pod<std::int32_t>(out, tree.feature[i]);
      write_pod<double>(out, tree.threshold[i]);
      write_pod<std::int32_t>(out, tree.left[i]);
      write_pod<std::int32_t>(out, tree.right[i]);
      write_pod<double>(out, tree.value[i]);
    }
    out.write(reinterpret_cast<const char*>(in_bag_[t].data()),
              static_cast<std::streamsize>(in_bag_[t].size()));
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

Forest Forest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, "FMRF1", 5) != 0) {
    throw ParseError(path + ": not a forest file (bad magic)");
  }
  const int n_trees = read_pod<std::int32_t>(in);
  const int n_features = read_pod<std::int32_t>(in);
  ForestConfig cfg;
  cfg.n_trees = n_trees;
  cfg.m_try = read_pod<std::int32_t>(in);
  cfg.min_leaf = read_pod<std::int32_t>(in);
  cfg.max_depth = read_pod<std::int32_t>(in);
  cfg.bootstrap = read_pod<std::uint8_t>(in) != 0;
  cfg.seed = read_pod<std::uint64_t>(in);
  const long n_rows = static_cast<long>(read_pod<std::int64_t>(in));
  if (n_trees < 1 || n_features < 1 || n_rows < 0) throw ParseError(path + ": corrupt header");

  std::vector<Tree> trees(n_trees);
  std::vector<std::vector<std::uint8_t>> in_bag(n_trees);
  for (int t = 0; t < n_trees; ++t) {
    const long n_nodes = static_cast<long>(read_pod<std::int64_t>(in));
    if (n_nodes < 1) throw ParseError(path + ": corrupt tree");
    Tree& tree = trees[t];
    tree.feature.resize(n_nodes);
    tree.threshold.resize(n_nodes);
    tree.left.resize(n_nodes);
    tree.right.resize(n_nodes);
    tree.value.resize(n_nodes);
    for (long i = 0; i < n_nodes; ++i) {
      tree.feature[i] = read_pod<std::int32_t>(in);
      tree.threshold[i] = read_pod<double>(in);
      tree.left[i] = read_pod<std::int32_t>(in);
      tree.right[i] = read_pod<std::int32_t>(in);
      tree.value[i] = read_pod<double>(in);
    }
    in_bag[t].resize(n_rows);
    in.read(reinterpret_cast<char*>(in_bag[t].data()), n_rows);
    if (!in) throw IoError(path + ": truncated in-bag record");
  }
  return Forest(std::move(trees), std::move(in_bag), n_features, cfg);
}

}  // namespace airfuse
