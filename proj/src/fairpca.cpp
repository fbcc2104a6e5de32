#include "fairgrade/fairpca.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>

#include "fairgrade/io.hpp"

namespace fairgrade {

using nlohmann::json;

namespace {

/// Sign-canonical top-k eigenvectors (descending eigenvalues) of a symmetric
/// matrix: the largest-magnitude entry of each column is made positive so the
/// basis is unique up to degenerate eigenvalue ties.
Eigen::MatrixXd top_k_eigenvectors(const Eigen::MatrixXd& sym, int k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  require(eig.info() == Eigen::Success, Cond::SingularSystem,
          "eigendecomposition failed");
  const int d = static_cast<int>(sym.rows());
  Eigen::MatrixXd basis(d, k);
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd col = eig.eigenvectors().col(d - 1 - j);
    int arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col[arg] < 0.0) col = -col;
    basis.col(j) = col;
  }
  return basis;
}

double top_k_eigenvalue_sum(const Eigen::MatrixXd& sym, int k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  double sum = 0.0;
  const int d = static_cast<int>(sym.rows());
  for (int j = 0; j < k; ++j) sum += eig.eigenvalues()[d - 1 - j];
  return sum;
}

}  // namespace

Eigen::VectorXd FairProjection::project(const Eigen::VectorXd& x) const {
  return fairgrade::project(*this, x, center);
}

FairProjection fit_fair_pca(const std::vector<GroupData>& groups, int k,
                            int iters, double rate, std::uint64_t /*seed*/) {
  require(!groups.empty(), Cond::InvalidConfig, "no groups");
  const int d = static_cast<int>(groups.front().rows.cols());
  require(k >= 1 && k <= d, Cond::InvalidConfig, "need 1 <= k <= d, k=", k,
          " d=", d);
  require(iters >= 1, Cond::InvalidConfig, "iters must be positive");
  std::size_t total_rows = 0;
  for (const auto& g : groups) {
    require(g.rows.cols() == d, Cond::DimensionMismatch, "group ", g.group_id,
            " has ", g.rows.cols(), " dims, expected ", d);
    require(g.rows.rows() >= 2, Cond::InvalidConfig, "group ", g.group_id,
            " needs at least 2 rows");
    total_rows += g.rows.rows();
  }

  // Pooled centering; a single projection must apply to unseen vectors.
  Eigen::VectorXd center = Eigen::VectorXd::Zero(d);
  for (const auto& g : groups) center += g.rows.colwise().sum().transpose();
  center /= static_cast<double>(total_rows);

  const int n_groups = static_cast<int>(groups.size());
  std::vector<Eigen::MatrixXd> cov(n_groups);      // normalized, per group
  std::vector<double> best_rank_k(n_groups);        // sum of top-k eigenvalues
  Eigen::MatrixXd pooled_scatter = Eigen::MatrixXd::Zero(d, d);
  for (int g = 0; g < n_groups; ++g) {
    const Eigen::MatrixXd centered =
        groups[g].rows.rowwise() - center.transpose();
    cov[g] = centered.transpose() * centered /
             static_cast<double>(groups[g].rows.rows());
    best_rank_k[g] = top_k_eigenvalue_sum(cov[g], k);
    pooled_scatter += centered.transpose() * centered;
  }

  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pooled_scatter);
    const double lmax = eig.eigenvalues().maxCoeff();
    int rank = 0;
    for (int i = 0; i < d; ++i) {
      if (eig.eigenvalues()[i] > 1e-10 * std::max(lmax, 1.0)) ++rank;
    }
    require(rank >= k, Cond::RankDeficient, "pooled covariance rank ", rank,
            " < k = ", k);
  }

  auto group_losses_at = [&](const Eigen::MatrixXd& basis) {
    std::vector<double> losses(n_groups);
    for (int g = 0; g < n_groups; ++g) {
      losses[g] = best_rank_k[g] - (basis.transpose() * cov[g] * basis).trace();
    }
    return losses;
  };

  Eigen::MatrixXd best_basis;
  std::vector<double> best_losses;
  double best_max = std::numeric_limits<double>::infinity();
  int best_iteration = 0;
  auto consider = [&](const Eigen::MatrixXd& basis, int iteration) {
    auto losses = group_losses_at(basis);
    const double worst = *std::max_element(losses.begin(), losses.end());
    if (worst < best_max) {
      best_max = worst;
      best_basis = basis;
      best_losses = std::move(losses);
      best_iteration = iteration;
    }
  };

  // Plain pooled PCA is always a candidate, so the fair basis can only
  // improve on it.
  consider(top_k_eigenvectors(pooled_scatter, k), 0);

  // Multiplicative weights over convex combinations of group covariances.
  std::vector<double> log_w(n_groups, 0.0);
  for (int t = 0; t < iters; ++t) {
    const double log_max = *std::max_element(log_w.begin(), log_w.end());
    double norm = 0.0;
    std::vector<double> w(n_groups);
    for (int g = 0; g < n_groups; ++g) {
      w[g] = std::exp(log_w[g] - log_max);
      norm += w[g];
    }
    Eigen::MatrixXd mix = Eigen::MatrixXd::Zero(d, d);
    for (int g = 0; g < n_groups; ++g) mix += (w[g] / norm) * cov[g];

    const Eigen::MatrixXd basis = top_k_eigenvectors(mix, k);
    const auto losses = group_losses_at(basis);
    consider(basis, t + 1);
    for (int g = 0; g < n_groups; ++g) log_w[g] += rate * losses[g];
  }

  FairProjection fp;
  fp.basis = std::move(best_basis);
  fp.center = std::move(center);
  fp.k = k;
  fp.iterations_used = best_iteration;
  fp.max_excess_loss = best_max;
  for (int g = 0; g < n_groups; ++g) {
    fp.group_losses.push_back({groups[g].group_id, best_losses[g]});
  }
  return fp;
}

Eigen::VectorXd project(const FairProjection& fp, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& center) {
  require(x.size() == fp.basis.rows() && center.size() == fp.basis.rows(),
          Cond::DimensionMismatch, "projection expects ", fp.basis.rows(),
          " dims, got x=", x.size(), " center=", center.size());
  return fp.basis.transpose() * (x - center);
}

void save_fair_projection(const FairProjection& fp, const std::string& path) {
  json j;
  j["k"] = fp.k;
  j["d"] = fp.basis.rows();
  j["iterations_used"] = fp.iterations_used;
  j["max_excess_loss"] = fp.max_excess_loss;
  j["center"] = std::vector<double>(fp.center.data(),
                                    fp.center.data() + fp.center.size());
  json basis = json::array();  // row-major
  for (int r = 0; r < fp.basis.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < fp.basis.cols(); ++c) row.push_back(fp.basis(r, c));
    basis.push_back(std::move(row));
  }
  j["basis"] = std::move(basis);
  json losses = json::object();
  for (const auto& [group, loss] : fp.group_losses) losses[group] = loss;
  j["group_losses"] = std::move(losses);
  io::atomic_write(path, j.dump(2) + "\n");
}

FairProjection load_fair_projection(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    raise(Cond::MalformedRecord, "fairpca file ", path, ": ", e.what());
  }
  FairProjection fp;
  fp.k = j.at("k").get<int>();
  fp.iterations_used = j.value("iterations_used", 0);
  fp.max_excess_loss = j.value("max_excess_loss", 0.0);
  const auto center = j.at("center").get<std::vector<double>>();
  fp.center = Eigen::Map<const Eigen::VectorXd>(center.data(), center.size());
  const auto& basis = j.at("basis");
  const int d = static_cast<int>(basis.size());
  require(d > 0, Cond::MalformedRecord, "empty basis in ", path);
  fp.basis.resize(d, fp.k);
  for (int r = 0; r < d; ++r) {
    const auto row = basis[r].get<std::vector<double>>();
    require(static_cast<int>(row.size()) == fp.k, Cond::DimensionMismatch,
            "basis row ", r, " has ", row.size(), " entries, expected ", fp.k);
    for (int c = 0; c < fp.k; ++c) fp.basis(r, c) = row[c];
  }
  if (j.contains("group_losses")) {
    for (const auto& [group, loss] : j.at("group_losses").items()) {
      fp.group_losses.push_back({group, loss.get<double>()});
    }
  }
  return fp;
}

std::string fairpca_group_key(const GroupTags& tags) {
  return gender_name(tags.gender) + "|" + race_name(tags.race);
}

std::vector<GroupData> group_rows_by_tags(const Eigen::MatrixXd& rows,
                                          const std::vector<GroupTags>& tags,
                                          int k) {
  require(rows.rows() == static_cast<Eigen::Index>(tags.size()),
          Cond::LengthMismatch, "rows/tags size mismatch");
  std::map<std::string, std::vector<int>> members;
  for (int i = 0; i < rows.rows(); ++i) {
    members[fairpca_group_key(tags[i])].push_back(i);
  }

  std::vector<GroupData> out;
  std::vector<int> sparse;
  for (const auto& [key, idxs] : members) {
    if (static_cast<int>(idxs.size()) < k + 1) {
      sparse.insert(sparse.end(), idxs.begin(), idxs.end());
      continue;
    }
    GroupData g;
    g.group_id = key;
    g.rows.resize(idxs.size(), rows.cols());
    for (std::size_t r = 0; r < idxs.size(); ++r) {
      g.rows.row(r) = rows.row(idxs[r]);
    }
    out.push_back(std::move(g));
  }
  if (static_cast<int>(sparse.size()) >= 2) {
    GroupData g;
    g.group_id = "sparse";
    g.rows.resize(sparse.size(), rows.cols());
    for (std::size_t r = 0; r < sparse.size(); ++r) {
      g.rows.row(r) = rows.row(sparse[r]);
    }
    out.push_back(std::move(g));
  }
  require(!out.empty(), Cond::InvalidConfig,
          "no group has enough members for k = ", k);
  return out;
}

}  // namespace fairgrade
