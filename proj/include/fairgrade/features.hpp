#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fairgrade/types.hpp"

namespace fairgrade {

struct ExtremaProfile {
  std::vector<std::pair<std::size_t, double>> maxima;
  std::vector<std::pair<std::size_t, double>> minima;
};

inline constexpr int kNumAggregateFeatures = 11;

/// Names in the fixed vector order used everywhere (files, models, tests).
const std::array<std::string, kNumAggregateFeatures>& aggregate_feature_names();

struct AggregateFeatureVector {
  // Order: num_intensity_rise, num_intensity_drop, mean_max_intensities,
  // mean_min_intensities, average_singular_change, longest_pos_run,
  // longest_neg_run, stdev, max_intensity_5, num_maximas, num_minimas.
  std::array<double, kNumAggregateFeatures> values{};

  double operator[](int i) const { return values[i]; }
  Eigen::VectorXd as_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
  }
};

struct FeatureConfig {
  double theta_rise = 0.5;
  double theta_drop = 0.5;
  /// When true, average_singular_change keeps the sign of each step instead
  /// of taking absolute differences.
  bool signed_change = false;
};

/// Interior local extrema with plateaus counted once at their first index,
/// repaired so maxima and minima strictly alternate (the stronger of two
/// same-kind neighbours survives). Throws SeriesTooShort below 3 samples.
ExtremaProfile find_extrema(std::span<const double> series);

/// The 11 aggregate descriptors of one channel's intensity curve. Counts are
/// per second of video, runs are a fraction of the duration.
AggregateFeatureVector aggregate_features(std::span<const double> series,
                                          double fps,
                                          const FeatureConfig& cfg = {});

/// Expert-voted indicator channels per skill.
struct IndicatorSet {
  std::map<SocialSkill, std::set<int>> positive;  // channel indices
  std::map<SocialSkill, std::set<int>> negative;

  const std::set<int>& channels(SocialSkill skill, bool positive_polarity) const;
  void validate() const;
};

/// The default expert vote table (mirrors the synthetic generator links).
IndicatorSet default_indicators();

IndicatorSet load_indicators(const std::string& path);
void save_indicators(const IndicatorSet& ind, const std::string& path);

/// Shared-weight transformer for one (skill, polarity): a single weight
/// vector over the 11 aggregate features plus one learned constant per
/// indicator channel.
struct TransformerWeights {
  SocialSkill skill = SocialSkill::PositiveEmotion;
  bool positive_polarity = true;
  Eigen::VectorXd shared;               // length kNumAggregateFeatures
  std::map<int, double> channel_constant;
  double alpha = 0.0;

  bool has_channel(int channel) const {
    return channel_constant.count(channel) > 0;
  }
};

/// Per-video aggregate features for the channels of interest.
/// afvs[(video index in the supplied list, channel)] layout is the caller's;
/// here we take parallel arrays: for each training video an AFV per channel.
struct StackedFitInput {
  /// One entry per training video: channel -> AFV.
  std::vector<std::map<int, AggregateFeatureVector>> video_features;
  /// Target consensus score per training video.
  std::vector<double> targets;
};

/// Fits the stacked ridge system: one row per (video, indicator channel),
/// the 11 aggregate features share one penalized weight vector and each
/// channel gets an unpenalized constant column.
TransformerWeights transform_channel_features(const StackedFitInput& input,
                                              const IndicatorSet& indicators,
                                              SocialSkill skill,
                                              bool positive_polarity,
                                              double alpha);

/// shared . afv + channel constant. Throws UnknownChannel.
double apply_transformer(const TransformerWeights& tw,
                         const AggregateFeatureVector& afv, int channel);

}  // namespace fairgrade
