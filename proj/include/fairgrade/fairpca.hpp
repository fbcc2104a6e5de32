#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fairgrade/types.hpp"

namespace fairgrade {

struct FairProjection {
  Eigen::MatrixXd basis;   // d x k, orthonormal columns
  Eigen::VectorXd center;  // pooled mean used for centering
  int k = 0;
  /// Excess reconstruction error per group at the returned basis:
  /// (||A_g - A_g B B'||_F^2 - ||A_g - best rank-k of A_g||_F^2) / n_g.
  std::vector<std::pair<std::string, double>> group_losses;
  int iterations_used = 0;
  double max_excess_loss = 0.0;

  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
};

struct GroupData {
  std::string group_id;
  Eigen::MatrixXd rows;  // n_g x d
};

/// Minimizes (approximately) the maximum per-group excess reconstruction
/// error over rank-k projections by multiplicative weights over group
/// covariances. The pooled-PCA basis and the uniform-weight iterate are both
/// candidate solutions, so the result never does worse than either. The seed
/// is reserved for eigen-solver tie-breaking and currently unused.
FairProjection fit_fair_pca(const std::vector<GroupData>& groups, int k,
                            int iters = 64, double rate = 1.0,
                            std::uint64_t seed = 0);

/// basis' * (x - center); throws DimensionMismatch.
Eigen::VectorXd project(const FairProjection& fp, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& center);

void save_fair_projection(const FairProjection& fp, const std::string& path);
FairProjection load_fair_projection(const std::string& path);

/// Group key used when fitting on prosody vectors: gender x race.
std::string fairpca_group_key(const GroupTags& tags);

/// Splits rows into gender x race groups; groups with fewer than k + 1
/// members are pooled into a "sparse" group so covariances stay estimable.
std::vector<GroupData> group_rows_by_tags(
    const Eigen::MatrixXd& rows, const std::vector<GroupTags>& tags, int k);

}  // namespace fairgrade
