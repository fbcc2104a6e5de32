#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace fairgrade {

struct ForestConfig {
  int n_estimators = 50;
  int max_depth = -1;  // -1 = unlimited, 0 = root-only trees
  int min_leaf = 2;
};

/// Bagged CART regression trees with variance-reduction splits and d/3
/// feature subsampling per split. Fully deterministic for a fixed seed.
class RandomForest {
public:
  static RandomForest fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const ForestConfig& cfg, std::uint64_t seed);

  double predict_row(const Eigen::VectorXd& row) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  /// Prediction averaged over the first n_trees trees only; tree t depends
  /// only on (seed, t), so this equals a fit with n_estimators = n_trees.
  double predict_row_prefix(const Eigen::VectorXd& row, int n_trees) const;

  int tree_count() const { return static_cast<int>(trees_.size()); }
  bool empty() const { return trees_.empty(); }

  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  const std::vector<Tree>& trees() const { return trees_; }
  void set_trees(std::vector<Tree> trees) { trees_ = std::move(trees); }

private:
  std::vector<Tree> trees_;
};

}  // namespace fairgrade
