#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fairgrade/fairpca.hpp"
#include "fairgrade/features.hpp"
#include "fairgrade/forest.hpp"
#include "fairgrade/ratings.hpp"
#include "fairgrade/types.hpp"

namespace fairgrade {

struct LinearModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  int iterations = 0;
  bool converged = true;

  double predict_row(const Eigen::VectorXd& row) const {
    return weights.dot(row) + intercept;
  }
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    return (x * weights).array() + intercept;
  }
};

/// Closed-form ridge with an unpenalized intercept (center, solve, restore).
/// SingularSystem only when alpha = 0 and the centered Gram is singular.
LinearModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      double alpha);

/// Cyclic coordinate descent for (1/2n)||y - b - Xw||^2 + lambda * ||w~||_1,
/// where w~ are the coefficients of internally standardized columns (the
/// penalty acts on the standardized scale). converged = false after max_iter
/// sweeps is a diagnostic, not an error; the best iterate is returned.
LinearModel lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      double lambda, double tol = 1e-7, int max_iter = 10000);

/// The objective lasso_fit minimizes, evaluated for any linear model.
double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const LinearModel& model, double lambda);

enum class RegressorKind { Ridge, Lasso, RandomForest };
const char* regressor_kind_name(RegressorKind k);
RegressorKind regressor_kind_from_name(const std::string& name);

struct ModelGrids {
  std::vector<double> ridge_alphas;
  std::vector<double> lasso_lambdas;
  std::vector<int> rf_estimators;

  /// Ridge: 20 log-spaced points over [1, 1000]; LASSO: 0..4 step 0.1;
  /// random forest: 15..100 estimators.
  static ModelGrids defaults();
};

struct Regressor {
  RegressorKind kind = RegressorKind::Ridge;
  double hyper = 0.0;  // alpha, lambda, or estimator count
  LinearModel linear;
  RandomForest forest;
  double cv_correlation = 0.0;

  double predict_row(const Eigen::VectorXd& row) const;
};

/// Grid search over all three model families by k-fold cross-validation
/// correlation (Pearson of pooled out-of-fold predictions against y). Ties
/// prefer Ridge over Lasso over RandomForest, then the simpler setting.
/// The winner is refit on all rows. Throws DegenerateTarget when Var(y) = 0.
Regressor select_model(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const ModelGrids& grids, int cv_folds,
                       std::uint64_t seed, const ForestConfig& rf_base = {});

// ---------------------------------------------------------------------------
// Expert-driven pipeline: transformed facial scalars ++ FairPCA prosody.
// ---------------------------------------------------------------------------

/// Aggregate features of every channel, per video (video index order).
using FeatureTable = std::vector<std::array<AggregateFeatureVector, kNumChannels>>;

FeatureTable featurize_dataset(const Dataset& ds, const FeatureConfig& cfg);

struct ExpertPipelineConfig {
  FeatureConfig features;
  double transformer_alpha = 1.0;
  int fairpca_k = 64;
  int fairpca_iters = 64;
  double fairpca_rate = 1.0;
  ModelGrids grids = ModelGrids::defaults();
  ForestConfig rf;
  int cv_folds = 5;
};

struct ExpertModel {
  SocialSkill skill = SocialSkill::PositiveEmotion;
  std::set<int> pos_channels;
  std::set<int> neg_channels;
  TransformerWeights pos_transformer;
  TransformerWeights neg_transformer;
  FairProjection prosody_projection;
  Regressor regressor;
  std::vector<std::string> column_names;

  /// Transformed facial scalars (positive set, then negative set, canonical
  /// channel order) followed by the projected prosody components.
  Eigen::VectorXd design_row(
      const VideoRecord& rec,
      const std::array<AggregateFeatureVector, kNumChannels>& afvs) const;

  double predict_video(
      const VideoRecord& rec,
      const std::array<AggregateFeatureVector, kNumChannels>& afvs) const;
};

ExpertModel fit_expert_model(const Dataset& ds, const FeatureTable& table,
                             const ConsensusRatings& cr,
                             const IndicatorSet& indicators, SocialSkill skill,
                             const std::vector<std::size_t>& train_videos,
                             const ExpertPipelineConfig& cfg,
                             std::uint64_t seed);

void save_expert_models(const std::vector<ExpertModel>& models,
                        const std::string& path);
std::vector<ExpertModel> load_expert_models(const std::string& path);

// ---------------------------------------------------------------------------
// Train/test protocol: stratified 70-30 candidate splits, bootstrapped.
// ---------------------------------------------------------------------------

struct EvalConfig {
  double split = 0.7;
  int bootstraps = 20;
  int min_stratum = 10;
  std::vector<SocialSkill> skills = {SocialSkill::PositiveEmotion,
                                     SocialSkill::Confidence,
                                     SocialSkill::Engagement};
  ExpertPipelineConfig pipeline;
};

struct EvalReport {
  std::vector<SocialSkill> skills;
  int bootstraps = 0;
  /// skill -> slice ("All->All", "All->US-UK", "All->India") -> mean r.
  std::map<SocialSkill, std::map<std::string, double>> mean_r;
  /// Mean over bootstraps of r(model_s predictions, consensus_t); rows are
  /// model skills, columns target skills, in `skills` order.
  Eigen::MatrixXd cross_correlation;
};

/// Per-candidate score predictor returned by a model fitter.
using CandidatePredictor = std::function<double(const std::string&)>;
/// Fits a model for one skill on the given train candidates.
using ModelFitter = std::function<CandidatePredictor(
    SocialSkill, const std::vector<std::string>&, std::uint64_t)>;

/// Protocol engine with an injectable fitter (oracle models in tests).
EvalReport evaluate_with(const ModelFitter& fitter, const Dataset& ds,
                         const ConsensusRatings& cr, const EvalConfig& cfg,
                         std::uint64_t seed);

/// The expert-driven evaluation: fits the full pipeline per bootstrap.
EvalReport evaluate(const Dataset& ds, const FeatureTable& table,
                    const ConsensusRatings& cr, const IndicatorSet& indicators,
                    const EvalConfig& cfg, std::uint64_t seed);

}  // namespace fairgrade
