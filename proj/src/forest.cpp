#include "fairgrade/forest.hpp"

#include <algorithm>
#include <numeric>

#include "fairgrade/error.hpp"
#include "fairgrade/rng.hpp"

namespace fairgrade {

namespace {

struct Builder {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  const ForestConfig& cfg;
  Rng& rng;
  int mtry;
  RandomForest::Tree tree;
  // scratch: (value, target) pairs for the split scan
  std::vector<std::pair<double, double>> scan;

  int build(std::vector<int>& rows, int depth) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});

    double sum = 0.0;
    for (int r : rows) sum += y[r];
    const double mean = sum / static_cast<double>(rows.size());
    tree.nodes[node_id].value = mean;

    const bool depth_done = cfg.max_depth >= 0 && depth >= cfg.max_depth;
    if (depth_done || static_cast<int>(rows.size()) < 2 * cfg.min_leaf) {
      return node_id;
    }

    // Variance-reduction split: maximize sum_L^2/n_L + sum_R^2/n_R.
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    const double base = sum * sum / static_cast<double>(rows.size());

    std::vector<int> features(x.cols());
    std::iota(features.begin(), features.end(), 0);
    for (int i = 0; i < mtry; ++i) {
      std::swap(features[i],
                features[i + rng.uniform_index(features.size() - i)]);
    }

    for (int fi = 0; fi < mtry; ++fi) {
      const int f = features[fi];
      scan.clear();
      for (int r : rows) scan.push_back({x(r, f), y[r]});
      std::sort(scan.begin(), scan.end());

      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < scan.size(); ++i) {
        left_sum += scan[i].second;
        if (scan[i].first == scan[i + 1].first) continue;
        const int n_left = static_cast<int>(i) + 1;
        const int n_right = static_cast<int>(scan.size()) - n_left;
        if (n_left < cfg.min_leaf || n_right < cfg.min_leaf) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / n_left +
                            right_sum * right_sum / n_right - base;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (scan[i].first + scan[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return node_id;

    std::vector<int> left, right;
    for (int r : rows) {
      (x(r, best_feature) <= best_threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    const int l = build(left, depth + 1);
    tree.nodes[node_id].left = l;
    const int r = build(right, depth + 1);
    tree.nodes[node_id].right = r;
    return node_id;
  }
};

double tree_predict(const RandomForest::Tree& tree, const Eigen::VectorXd& row) {
  int node = 0;
  while (tree.nodes[node].feature >= 0) {
    const auto& n = tree.nodes[node];
    node = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  return tree.nodes[node].value;
}

}  // namespace

RandomForest RandomForest::fit(const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& y,
                               const ForestConfig& cfg, std::uint64_t seed) {
  require(x.rows() == y.size(), Cond::LengthMismatch, "x has ", x.rows(),
          " rows but y has ", y.size());
  require(x.rows() >= 1 && x.cols() >= 1, Cond::InvalidConfig, "empty design");
  require(cfg.n_estimators >= 1, Cond::InvalidConfig,
          "n_estimators must be >= 1");
  require(cfg.min_leaf >= 1, Cond::InvalidConfig, "min_leaf must be >= 1");

  RandomForest forest;
  const int n = static_cast<int>(x.rows());
  const int mtry = std::max(1, static_cast<int>(x.cols()) / 3);

  for (int t = 0; t < cfg.n_estimators; ++t) {
    Rng rng(derive_seed(seed, 0xF07E57, static_cast<std::uint64_t>(t)));
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) {
      rows[i] = static_cast<int>(rng.uniform_index(n));
    }
    Builder builder{x, y, cfg, rng, mtry, {}, {}};
    builder.tree.nodes.reserve(2 * n);
    builder.build(rows, 0);
    forest.trees_.push_back(std::move(builder.tree));
  }
  return forest;
}

double RandomForest::predict_row(const Eigen::VectorXd& row) const {
  return predict_row_prefix(row, tree_count());
}

double RandomForest::predict_row_prefix(const Eigen::VectorXd& row,
                                        int n_trees) const {
  require(n_trees >= 1 && n_trees <= tree_count(), Cond::InvalidConfig,
          "prefix size ", n_trees, " outside 1..", tree_count());
  double sum = 0.0;
  for (int t = 0; t < n_trees; ++t) sum += tree_predict(trees_[t], row);
  return sum / n_trees;
}

Eigen::VectorXd RandomForest::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (int i = 0; i < x.rows(); ++i) {
    out[i] = predict_row(x.row(i).transpose());
  }
  return out;
}

}  // namespace fairgrade
