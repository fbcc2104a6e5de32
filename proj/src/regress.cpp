#include "fairgrade/regress.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "fairgrade/io.hpp"
#include "fairgrade/rng.hpp"
#include "fairgrade/stats.hpp"

namespace fairgrade {

using nlohmann::json;

LinearModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      double alpha) {
  require(x.rows() == y.size(), Cond::LengthMismatch, "x has ", x.rows(),
          " rows but y has ", y.size());
  require(x.rows() >= 2, Cond::InvalidConfig, "need at least 2 rows");
  require(alpha >= 0.0, Cond::InvalidConfig, "alpha must be non-negative");

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += alpha;
  if (alpha == 0.0) {
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    require(lu.isInvertible(), Cond::SingularSystem,
            "centered Gram matrix is singular and alpha = 0");
  }

  LinearModel model;
  model.weights = gram.ldlt().solve(xc.transpose() * yc);
  model.intercept = y_mean - x_mean.dot(model.weights);
  return model;
}

namespace {

struct Standardized {
  Eigen::MatrixXd x;       // zero-mean, unit population sd columns
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd sd;   // 0 marks a constant column (left out of the fit)
};

Standardized standardize(const Eigen::MatrixXd& x) {
  Standardized s;
  s.mean = x.colwise().mean();
  s.x = x.rowwise() - s.mean;
  s.sd.resize(x.cols());
  for (int j = 0; j < x.cols(); ++j) {
    const double var = s.x.col(j).squaredNorm() / static_cast<double>(x.rows());
    s.sd[j] = std::sqrt(var);
    if (s.sd[j] > 0.0) {
      s.x.col(j) /= s.sd[j];
    } else {
      s.x.col(j).setZero();
    }
  }
  return s;
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

LinearModel lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      double lambda, double tol, int max_iter) {
  require(x.rows() == y.size(), Cond::LengthMismatch, "x has ", x.rows(),
          " rows but y has ", y.size());
  require(x.rows() >= 2, Cond::InvalidConfig, "need at least 2 rows");
  require(lambda >= 0.0, Cond::InvalidConfig, "lambda must be non-negative");

  const auto s = standardize(x);
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  const double y_mean = y.mean();

  Eigen::VectorXd w = Eigen::VectorXd::Zero(p);  // standardized scale
  Eigen::VectorXd residual = y.array() - y_mean;

  LinearModel model;
  model.converged = false;
  for (int sweep = 0; sweep < max_iter; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < p; ++j) {
      if (s.sd[j] == 0.0) continue;
      // Columns have squared norm n, so the coordinate minimizer is a plain
      // soft threshold of rho_j = (1/n) x_j . (residual + x_j w_j).
      const double rho = s.x.col(j).dot(residual) / n + w[j];
      const double updated = soft_threshold(rho, lambda);
      const double change = updated - w[j];
      if (change != 0.0) {
        residual -= s.x.col(j) * change;
        w[j] = updated;
        max_change = std::max(max_change, std::fabs(change));
      }
    }
    model.iterations = sweep + 1;
    if (max_change < tol) {
      model.converged = true;
      break;
    }
  }

  model.weights.resize(p);
  for (int j = 0; j < p; ++j) {
    model.weights[j] = s.sd[j] > 0.0 ? w[j] / s.sd[j] : 0.0;
  }
  model.intercept = y_mean - s.mean.dot(model.weights);
  return model;
}

double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const LinearModel& model, double lambda) {
  const double n = static_cast<double>(x.rows());
  const double rss = (y - model.predict(x)).squaredNorm();
  double l1 = 0.0;
  for (int j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd centered = x.col(j).array() - x.col(j).mean();
    const double sd = std::sqrt(centered.squaredNorm() / n);
    l1 += std::fabs(model.weights[j]) * sd;
  }
  return rss / (2.0 * n) + lambda * l1;
}

const char* regressor_kind_name(RegressorKind k) {
  switch (k) {
    case RegressorKind::Ridge: return "ridge";
    case RegressorKind::Lasso: return "lasso";
    case RegressorKind::RandomForest: return "random_forest";
  }
  return "unknown";
}

RegressorKind regressor_kind_from_name(const std::string& name) {
  for (RegressorKind k : {RegressorKind::Ridge, RegressorKind::Lasso,
                          RegressorKind::RandomForest}) {
    if (regressor_kind_name(k) == name) return k;
  }
  raise(Cond::MalformedRecord, "unknown regressor kind: ", name);
}

ModelGrids ModelGrids::defaults() {
  ModelGrids g;
  for (int i = 0; i < 20; ++i) {
    g.ridge_alphas.push_back(std::pow(10.0, 3.0 * i / 19.0));
  }
  for (int i = 0; i <= 40; ++i) {
    g.lasso_lambdas.push_back(0.1 * i);
  }
  g.rf_estimators = {15, 50, 100};
  return g;
}

double Regressor::predict_row(const Eigen::VectorXd& row) const {
  if (kind == RegressorKind::RandomForest) return forest.predict_row(row);
  return linear.predict_row(row);
}

namespace {

std::vector<std::vector<int>> make_folds(int n, int k, std::uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xCF01D));
  rng.shuffle(order);
  std::vector<std::vector<int>> folds(k);
  for (int i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  return folds;
}

struct FoldData {
  Eigen::MatrixXd x_train, x_test;
  Eigen::VectorXd y_train;
  std::vector<int> test_rows;
};

FoldData split_fold(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const std::vector<std::vector<int>>& folds, int f) {
  FoldData d;
  d.test_rows = folds[f];
  std::vector<int> train_rows;
  for (int g = 0; g < static_cast<int>(folds.size()); ++g) {
    if (g == f) continue;
    train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(d.test_rows.begin(), d.test_rows.end());
  d.x_train.resize(train_rows.size(), x.cols());
  d.y_train.resize(train_rows.size());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    d.x_train.row(i) = x.row(train_rows[i]);
    d.y_train[i] = y[train_rows[i]];
  }
  d.x_test.resize(d.test_rows.size(), x.cols());
  for (std::size_t i = 0; i < d.test_rows.size(); ++i) {
    d.x_test.row(i) = x.row(d.test_rows[i]);
  }
  return d;
}

double pooled_cv_r(const Eigen::VectorXd& predictions, const Eigen::VectorXd& y) {
  const double r = stats::pearson(
      std::span<const double>(predictions.data(), predictions.size()),
      std::span<const double>(y.data(), y.size()));
  return std::isfinite(r) ? r : -1.0;
}

}  // namespace

Regressor select_model(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const ModelGrids& grids, int cv_folds,
                       std::uint64_t seed, const ForestConfig& rf_base) {
  require(cv_folds >= 2, Cond::InvalidConfig, "cv_folds must be >= 2");
  require(x.rows() >= cv_folds, Cond::InvalidConfig, "need at least ",
          cv_folds, " rows");
  {
    const std::span<const double> ys(y.data(), y.size());
    require(stats::population_sd(ys) > 0.0, Cond::DegenerateTarget,
            "target has zero variance");
  }

  const int n = static_cast<int>(x.rows());
  const auto folds = make_folds(n, cv_folds, seed);

  double best_score = -std::numeric_limits<double>::infinity();
  RegressorKind best_kind = RegressorKind::Ridge;
  double best_hyper = 0.0;

  // Candidates are enumerated simplest-first per family (Ridge, then Lasso,
  // then forests), so strict improvement implements the tie-breaking rule.
  auto try_candidate = [&](RegressorKind kind, double hyper, double score) {
    if (score > best_score) {
      best_score = score;
      best_kind = kind;
      best_hyper = hyper;
    }
  };

  {
    std::vector<double> alphas = grids.ridge_alphas;
    std::sort(alphas.begin(), alphas.end(), std::greater<>());
    for (double alpha : alphas) {
      Eigen::VectorXd pooled(n);
      for (int f = 0; f < cv_folds; ++f) {
        const auto d = split_fold(x, y, folds, f);
        const auto m = ridge_fit(d.x_train, d.y_train, alpha);
        const Eigen::VectorXd pred = m.predict(d.x_test);
        for (std::size_t i = 0; i < d.test_rows.size(); ++i) {
          pooled[d.test_rows[i]] = pred[i];
        }
      }
      try_candidate(RegressorKind::Ridge, alpha, pooled_cv_r(pooled, y));
    }
  }
  {
    std::vector<double> lambdas = grids.lasso_lambdas;
    std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
    for (double lambda : lambdas) {
      Eigen::VectorXd pooled(n);
      for (int f = 0; f < cv_folds; ++f) {
        const auto d = split_fold(x, y, folds, f);
        const auto m = lasso_fit(d.x_train, d.y_train, lambda);
        const Eigen::VectorXd pred = m.predict(d.x_test);
        for (std::size_t i = 0; i < d.test_rows.size(); ++i) {
          pooled[d.test_rows[i]] = pred[i];
        }
      }
      try_candidate(RegressorKind::Lasso, lambda, pooled_cv_r(pooled, y));
    }
  }
  if (!grids.rf_estimators.empty()) {
    std::vector<int> counts = grids.rf_estimators;
    std::sort(counts.begin(), counts.end());
    const int max_trees = counts.back();
    // One forest of max_trees per fold; tree t depends only on (seed, t), so
    // prefix predictions equal separately fitted smaller forests.
    std::vector<Eigen::VectorXd> pooled(counts.size(), Eigen::VectorXd(n));
    for (int f = 0; f < cv_folds; ++f) {
      ForestConfig cfg = rf_base;
      cfg.n_estimators = max_trees;
      const auto d = split_fold(x, y, folds, f);
      const auto forest =
          RandomForest::fit(d.x_train, d.y_train, cfg,
                            derive_seed(seed, 0xFF, static_cast<std::uint64_t>(f)));
      for (std::size_t i = 0; i < d.test_rows.size(); ++i) {
        const Eigen::VectorXd row = d.x_test.row(i).transpose();
        for (std::size_t c = 0; c < counts.size(); ++c) {
          pooled[c][d.test_rows[i]] = forest.predict_row_prefix(row, counts[c]);
        }
      }
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
      try_candidate(RegressorKind::RandomForest, counts[c],
                    pooled_cv_r(pooled[c], y));
    }
  }

  Regressor out;
  out.kind = best_kind;
  out.hyper = best_hyper;
  out.cv_correlation = best_score;
  switch (best_kind) {
    case RegressorKind::Ridge:
      out.linear = ridge_fit(x, y, best_hyper);
      break;
    case RegressorKind::Lasso:
      out.linear = lasso_fit(x, y, best_hyper);
      break;
    case RegressorKind::RandomForest: {
      ForestConfig cfg = rf_base;
      cfg.n_estimators = static_cast<int>(best_hyper);
      out.forest = RandomForest::fit(x, y, cfg, derive_seed(seed, 0xFF, 1000));
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

FeatureTable featurize_dataset(const Dataset& ds, const FeatureConfig& cfg) {
  FeatureTable table(ds.videos.size());
  for (std::size_t v = 0; v < ds.videos.size(); ++v) {
    const auto& frames = ds.videos[v].frames;
    for (int c = 0; c < kNumChannels; ++c) {
      table[v][c] = aggregate_features(frames.channels[c], frames.fps, cfg);
    }
  }
  return table;
}

Eigen::VectorXd ExpertModel::design_row(
    const VideoRecord& rec,
    const std::array<AggregateFeatureVector, kNumChannels>& afvs) const {
  Eigen::VectorXd row(static_cast<int>(pos_channels.size()) +
                      static_cast<int>(neg_channels.size()) +
                      prosody_projection.k);
  int i = 0;
  for (int c : pos_channels) {
    row[i++] = apply_transformer(pos_transformer, afvs[c], c);
  }
  for (int c : neg_channels) {
    row[i++] = apply_transformer(neg_transformer, afvs[c], c);
  }
  row.tail(prosody_projection.k) = prosody_projection.project(rec.prosody);
  return row;
}

double ExpertModel::predict_video(
    const VideoRecord& rec,
    const std::array<AggregateFeatureVector, kNumChannels>& afvs) const {
  return regressor.predict_row(design_row(rec, afvs));
}

ExpertModel fit_expert_model(const Dataset& ds, const FeatureTable& table,
                             const ConsensusRatings& cr,
                             const IndicatorSet& indicators, SocialSkill skill,
                             const std::vector<std::size_t>& train_videos,
                             const ExpertPipelineConfig& cfg,
                             std::uint64_t seed) {
  require(table.size() == ds.videos.size(), Cond::LengthMismatch,
          "feature table does not match the dataset");
  require(!train_videos.empty(), Cond::InvalidConfig, "no training videos");

  ExpertModel model;
  model.skill = skill;
  model.pos_channels = indicators.channels(skill, true);
  model.neg_channels = indicators.channels(skill, false);
  require(!model.pos_channels.empty() || !model.neg_channels.empty(),
          Cond::EmptyIndicatorSet, "no indicators for ", skill_name(skill));

  StackedFitInput stacked;
  for (std::size_t v : train_videos) {
    std::map<int, AggregateFeatureVector> per_channel;
    for (int c : model.pos_channels) per_channel[c] = table[v][c];
    for (int c : model.neg_channels) per_channel[c] = table[v][c];
    stacked.video_features.push_back(std::move(per_channel));
    stacked.targets.push_back(
        cr.per_video.at({ds.videos[v].video_id, skill}));
  }

  if (!model.pos_channels.empty()) {
    model.pos_transformer = transform_channel_features(
        stacked, indicators, skill, true, cfg.transformer_alpha);
  }
  if (!model.neg_channels.empty()) {
    model.neg_transformer = transform_channel_features(
        stacked, indicators, skill, false, cfg.transformer_alpha);
  }

  require(cfg.fairpca_k <= ds.prosody_dim, Cond::ConfigInvalid,
          "fairpca k = ", cfg.fairpca_k, " exceeds prosody dim ",
          ds.prosody_dim);
  Eigen::MatrixXd prosody(train_videos.size(), ds.prosody_dim);
  std::vector<GroupTags> tags(train_videos.size());
  for (std::size_t i = 0; i < train_videos.size(); ++i) {
    prosody.row(i) = ds.videos[train_videos[i]].prosody.transpose();
    tags[i] = ds.videos[train_videos[i]].tags;
  }
  const auto groups = group_rows_by_tags(prosody, tags, cfg.fairpca_k);
  model.prosody_projection = fit_fair_pca(groups, cfg.fairpca_k,
                                          cfg.fairpca_iters, cfg.fairpca_rate,
                                          seed);

  Eigen::MatrixXd x(train_videos.size(), model.pos_channels.size() +
                                             model.neg_channels.size() +
                                             cfg.fairpca_k);
  Eigen::VectorXd y(train_videos.size());
  for (std::size_t i = 0; i < train_videos.size(); ++i) {
    x.row(i) = model
                   .design_row(ds.videos[train_videos[i]],
                               table[train_videos[i]])
                   .transpose();
    y[i] = stacked.targets[i];
  }
  model.regressor =
      select_model(x, y, cfg.grids, cfg.cv_folds, seed, cfg.rf);

  for (int c : model.pos_channels) {
    model.column_names.push_back("pos:" + channel_names()[c]);
  }
  for (int c : model.neg_channels) {
    model.column_names.push_back("neg:" + channel_names()[c]);
  }
  for (int i = 0; i < cfg.fairpca_k; ++i) {
    model.column_names.push_back("prosody:" + std::to_string(i));
  }
  return model;
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::string, GroupTags> candidate_tags(const Dataset& ds) {
  std::map<std::string, GroupTags> tags;
  for (const auto& video : ds.videos) {
    tags.emplace(video.candidate_id, video.tags);
  }
  return tags;
}

bool in_slice(const GroupTags& tags, const std::string& slice) {
  if (slice == "All") return true;
  if (slice == "US-UK") {
    return tags.country == Country::US || tags.country == Country::UK ||
           tags.country == Country::OtherEurope;
  }
  return tags.country == Country::India;  // "India"
}

}  // namespace

EvalReport evaluate_with(const ModelFitter& fitter, const Dataset& ds,
                         const ConsensusRatings& cr, const EvalConfig& cfg,
                         std::uint64_t seed) {
  require(cfg.bootstraps >= 1, Cond::InvalidConfig, "bootstraps must be >= 1");
  require(cfg.split > 0.0 && cfg.split < 1.0, Cond::InvalidConfig,
          "split must be in (0, 1)");
  const auto tags = candidate_tags(ds);
  const std::vector<std::string> slices = {"All", "US-UK", "India"};
  const int n_skills = static_cast<int>(cfg.skills.size());

  EvalReport report;
  report.skills = cfg.skills;
  report.bootstraps = cfg.bootstraps;
  report.cross_correlation = Eigen::MatrixXd::Zero(n_skills, n_skills);
  std::map<SocialSkill, std::map<std::string, double>> r_sums;

  for (int b = 0; b < cfg.bootstraps; ++b) {
    for (int si = 0; si < n_skills; ++si) {
      const SocialSkill skill = cfg.skills[si];

      // Candidates rated on this skill, with their consensus.
      std::vector<std::string> candidates;
      std::vector<double> scores;
      for (const auto& [key, value] : cr.per_candidate) {
        if (key.second == skill) {
          candidates.push_back(key.first);
          scores.push_back(value);
        }
      }
      require(!candidates.empty(), Cond::InvalidConfig,
              "no consensus for ", skill_name(skill));

      // Quartile strata of the consensus rating.
      const double q1 = stats::quantile_lower(scores, 0.25);
      const double q2 = stats::quantile_lower(scores, 0.50);
      const double q3 = stats::quantile_lower(scores, 0.75);
      std::array<std::vector<std::size_t>, 4> strata;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double v = scores[i];
        const int bin = v >= q3 ? 3 : v >= q2 ? 2 : v >= q1 ? 1 : 0;
        strata[bin].push_back(i);
      }
      for (const auto& stratum : strata) {
        require(static_cast<int>(stratum.size()) >= cfg.min_stratum,
                Cond::InvalidConfig, "stratum has ", stratum.size(),
                " candidates; at least ", cfg.min_stratum, " required");
      }

      const std::uint64_t iter_seed =
          derive_seed(seed, static_cast<std::uint64_t>(b),
                      static_cast<std::uint64_t>(skill));
      Rng rng(iter_seed);
      std::vector<std::string> train;
      std::vector<std::size_t> test;
      for (auto stratum : strata) {
        rng.shuffle(stratum);
        const std::size_t n_train = static_cast<std::size_t>(
            std::llround(cfg.split * static_cast<double>(stratum.size())));
        for (std::size_t i = 0; i < stratum.size(); ++i) {
          if (i < n_train) {
            train.push_back(candidates[stratum[i]]);
          } else {
            test.push_back(stratum[i]);
          }
        }
      }
      require(!test.empty(), Cond::InvalidConfig, "empty test split");
      std::sort(train.begin(), train.end());
      std::sort(test.begin(), test.end());

      const CandidatePredictor predict = fitter(skill, train, iter_seed);

      std::vector<double> predictions(test.size());
      for (std::size_t i = 0; i < test.size(); ++i) {
        predictions[i] = predict(candidates[test[i]]);
      }

      for (const auto& slice : slices) {
        std::vector<double> pred, actual;
        for (std::size_t i = 0; i < test.size(); ++i) {
          if (in_slice(tags.at(candidates[test[i]]), slice)) {
            pred.push_back(predictions[i]);
            actual.push_back(scores[test[i]]);
          }
        }
        require(!pred.empty(), Cond::EmptySlice, "slice ", slice,
                " is empty in the test split");
        r_sums[skill]["All->" + slice] += stats::pearson(pred, actual);
      }

      for (int ti = 0; ti < n_skills; ++ti) {
        std::vector<double> pred, target;
        for (std::size_t i = 0; i < test.size(); ++i) {
          const auto it =
              cr.per_candidate.find({candidates[test[i]], cfg.skills[ti]});
          if (it != cr.per_candidate.end()) {
            pred.push_back(predictions[i]);
            target.push_back(it->second);
          }
        }
        report.cross_correlation(si, ti) += stats::pearson(pred, target);
      }
    }
  }

  for (auto& [skill, slice_map] : r_sums) {
    for (auto& [slice, sum] : slice_map) {
      report.mean_r[skill][slice] = sum / cfg.bootstraps;
    }
  }
  report.cross_correlation /= static_cast<double>(cfg.bootstraps);
  return report;
}

EvalReport evaluate(const Dataset& ds, const FeatureTable& table,
                    const ConsensusRatings& cr, const IndicatorSet& indicators,
                    const EvalConfig& cfg, std::uint64_t seed) {
  // video indices per candidate that carry a consensus entry for a skill
  const auto by_candidate = ds.by_candidate();
  std::map<std::string, std::vector<std::size_t>> candidate_videos;
  for (const auto& [cid, idxs] : by_candidate) candidate_videos[cid] = idxs;

  const ModelFitter fitter = [&](SocialSkill skill,
                                 const std::vector<std::string>& train,
                                 std::uint64_t fit_seed) -> CandidatePredictor {
    std::vector<std::size_t> train_videos;
    for (const auto& cid : train) {
      for (std::size_t v : candidate_videos.at(cid)) {
        if (ds.videos[v].excluded) continue;
        if (cr.per_video.count({ds.videos[v].video_id, skill})) {
          train_videos.push_back(v);
        }
      }
    }
    auto model = std::make_shared<ExpertModel>(
        fit_expert_model(ds, table, cr, indicators, skill, train_videos,
                         cfg.pipeline, fit_seed));
    return [&ds, &table, &candidate_videos, model](const std::string& cid) {
      double sum = 0.0;
      int n = 0;
      for (std::size_t v : candidate_videos.at(cid)) {
        if (ds.videos[v].excluded) continue;
        sum += model->predict_video(ds.videos[v], table[v]);
        ++n;
      }
      require(n > 0, Cond::RejectedVideo, "candidate ", cid,
              " has no usable videos");
      return sum / n;
    };
  };
  return evaluate_with(fitter, ds, cr, cfg, seed);
}

// ---------------------------------------------------------------------------

namespace {

json linear_to_json(const LinearModel& m) {
  json j;
  j["weights"] = std::vector<double>(m.weights.data(),
                                     m.weights.data() + m.weights.size());
  j["intercept"] = m.intercept;
  return j;
}

LinearModel linear_from_json(const json& j) {
  LinearModel m;
  const auto w = j.at("weights").get<std::vector<double>>();
  m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
  m.intercept = j.at("intercept").get<double>();
  return m;
}

json forest_to_json(const RandomForest& f) {
  json trees = json::array();
  for (const auto& tree : f.trees()) {
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
      nodes.push_back({n.feature, n.threshold, n.value, n.left, n.right});
    }
    trees.push_back(std::move(nodes));
  }
  return trees;
}

RandomForest forest_from_json(const json& j) {
  std::vector<RandomForest::Tree> trees;
  for (const auto& tj : j) {
    RandomForest::Tree tree;
    for (const auto& nj : tj) {
      RandomForest::Node n;
      n.feature = nj.at(0).get<int>();
      n.threshold = nj.at(1).get<double>();
      n.value = nj.at(2).get<double>();
      n.left = nj.at(3).get<int>();
      n.right = nj.at(4).get<int>();
      tree.nodes.push_back(n);
    }
    trees.push_back(std::move(tree));
  }
  RandomForest f;
  f.set_trees(std::move(trees));
  return f;
}

json transformer_to_json(const TransformerWeights& tw) {
  json j;
  j["shared"] = std::vector<double>(tw.shared.data(),
                                    tw.shared.data() + tw.shared.size());
  json constants = json::object();
  for (const auto& [c, v] : tw.channel_constant) {
    constants[channel_names()[c]] = v;
  }
  j["constants"] = std::move(constants);
  j["alpha"] = tw.alpha;
  return j;
}

TransformerWeights transformer_from_json(const json& j, SocialSkill skill,
                                         bool positive) {
  TransformerWeights tw;
  tw.skill = skill;
  tw.positive_polarity = positive;
  const auto shared = j.at("shared").get<std::vector<double>>();
  tw.shared = Eigen::Map<const Eigen::VectorXd>(shared.data(), shared.size());
  for (const auto& [name, v] : j.at("constants").items()) {
    tw.channel_constant[channel_index(name)] = v.get<double>();
  }
  tw.alpha = j.value("alpha", 0.0);
  return tw;
}

json fairpca_to_json(const FairProjection& fp) {
  json j;
  j["k"] = fp.k;
  j["center"] = std::vector<double>(fp.center.data(),
                                    fp.center.data() + fp.center.size());
  json basis = json::array();
  for (int r = 0; r < fp.basis.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < fp.basis.cols(); ++c) row.push_back(fp.basis(r, c));
    basis.push_back(std::move(row));
  }
  j["basis"] = std::move(basis);
  return j;
}

FairProjection fairpca_from_json(const json& j) {
  FairProjection fp;
  fp.k = j.at("k").get<int>();
  const auto center = j.at("center").get<std::vector<double>>();
  fp.center = Eigen::Map<const Eigen::VectorXd>(center.data(), center.size());
  const auto& basis = j.at("basis");
  fp.basis.resize(basis.size(), fp.k);
  for (int r = 0; r < static_cast<int>(basis.size()); ++r) {
    const auto row = basis[r].get<std::vector<double>>();
    for (int c = 0; c < fp.k; ++c) fp.basis(r, c) = row[c];
  }
  return fp;
}

}  // namespace

void save_expert_models(const std::vector<ExpertModel>& models,
                        const std::string& path) {
  json j = json::object();
  for (const auto& m : models) {
    json mj;
    json pos = json::array(), neg = json::array();
    for (int c : m.pos_channels) pos.push_back(channel_names()[c]);
    for (int c : m.neg_channels) neg.push_back(channel_names()[c]);
    mj["indicators"] = {{"positive", pos}, {"negative", neg}};
    if (!m.pos_channels.empty()) {
      mj["positive_transformer"] = transformer_to_json(m.pos_transformer);
    }
    if (!m.neg_channels.empty()) {
      mj["negative_transformer"] = transformer_to_json(m.neg_transformer);
    }
    mj["fairpca"] = fairpca_to_json(m.prosody_projection);
    mj["regressor"] = {{"kind", regressor_kind_name(m.regressor.kind)},
                       {"hyper", m.regressor.hyper},
                       {"cv_correlation", m.regressor.cv_correlation}};
    if (m.regressor.kind == RegressorKind::RandomForest) {
      mj["regressor"]["forest"] = forest_to_json(m.regressor.forest);
    } else {
      mj["regressor"]["linear"] = linear_to_json(m.regressor.linear);
    }
    mj["columns"] = m.column_names;
    j[skill_name(m.skill)] = std::move(mj);
  }
  io::atomic_write(path, j.dump(2) + "\n");
}

std::vector<ExpertModel> load_expert_models(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    raise(Cond::MalformedRecord, "model file ", path, ": ", e.what());
  }
  std::vector<ExpertModel> models;
  for (const auto& [skill_key, mj] : j.items()) {
    ExpertModel m;
    m.skill = skill_from_name(skill_key);
    for (const auto& name : mj.at("indicators").at("positive")) {
      m.pos_channels.insert(channel_index(name.get<std::string>()));
    }
    for (const auto& name : mj.at("indicators").at("negative")) {
      m.neg_channels.insert(channel_index(name.get<std::string>()));
    }
    if (mj.contains("positive_transformer")) {
      m.pos_transformer =
          transformer_from_json(mj.at("positive_transformer"), m.skill, true);
    }
    if (mj.contains("negative_transformer")) {
      m.neg_transformer =
          transformer_from_json(mj.at("negative_transformer"), m.skill, false);
    }
    m.prosody_projection = fairpca_from_json(mj.at("fairpca"));
    const auto& rj = mj.at("regressor");
    m.regressor.kind =
        regressor_kind_from_name(rj.at("kind").get<std::string>());
    m.regressor.hyper = rj.at("hyper").get<double>();
    m.regressor.cv_correlation = rj.value("cv_correlation", 0.0);
    if (m.regressor.kind == RegressorKind::RandomForest) {
      m.regressor.forest = forest_from_json(rj.at("forest"));
    } else {
      m.regressor.linear = linear_from_json(rj.at("linear"));
    }
    m.column_names = mj.value("columns", std::vector<std::string>{});
    models.push_back(std::move(m));
  }
  return models;
}

}  // namespace fairgrade
