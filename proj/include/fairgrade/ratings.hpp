#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fairgrade/types.hpp"

namespace fairgrade {

struct RaterStats {
  std::string rater_id;
  /// Mean Pearson correlation against each other rater over shared usable
  /// scores (pooled across skills); NaN when no pair has enough overlap.
  double avg_inter_rater_r = 0.0;
  /// Mean of (this rater - mean of the other raters) over shared scores.
  double mean_diff = 0.0;
  std::size_t shared_scores = 0;
};

struct ConsensusRatings {
  std::map<std::pair<std::string, SocialSkill>, double> per_video;
  std::map<std::pair<std::string, SocialSkill>, double> per_candidate;

  std::vector<std::string> candidates() const;
};

struct RaterFilterResult {
  Dataset dataset;
  std::vector<RaterStats> removed;
  /// Stats of the surviving raters, recomputed once after removal.
  std::vector<RaterStats> survivors;
};

/// Computes per-rater agreement stats on the non-excluded videos.
std::vector<RaterStats> rater_stats(const Dataset& ds, int min_shared = 3);

/// Removes raters with avg_inter_rater_r < r_min or |mean_diff| > diff_max.
/// Single pass: removal decisions use the initial stats only. Videos left
/// with no raters are excluded. Throws AllRatersRemoved if nobody survives.
RaterFilterResult filter_raters(const Dataset& ds, double r_min = 0.5,
                                double diff_max = 1.0, int min_shared = 3);

/// Mean of usable scores per (video, skill), then per candidate as the mean
/// over that candidate's non-excluded videos. NA / "not clear" are omitted;
/// a (video, skill) cell with no usable score raises NoUsableScores.
ConsensusRatings consensus(const Dataset& ds);

/// Per skill: mean over rater pairs of the Pearson correlation between their
/// shared-video score vectors. Pairs with fewer than min_shared shared videos
/// (or degenerate variance) are skipped.
std::map<SocialSkill, double> inter_rater_agreement(const Dataset& ds,
                                                    int min_shared = 3);

/// Mean (across rated cells) variance of an n-rater resampled consensus,
/// for n = 1..max_raters, B resamples each. Index i holds n = i + 1.
std::vector<double> bootstrap_rater_variance(const Dataset& ds, int max_raters,
                                             int B, std::uint64_t seed);

struct InterParameterCorrelations {
  Eigen::Matrix4d matrix;  // skill enum order
  /// Set when r(Calmness, Confidence) exceeds the threshold.
  bool drop_calmness = false;
};

InterParameterCorrelations inter_parameter_correlations(
    const ConsensusRatings& cr, double calmness_threshold = 0.85);

}  // namespace fairgrade
