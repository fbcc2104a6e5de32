#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fairgrade/types.hpp"

namespace fairgrade {

/// Generator-side link from a channel to the skill whose expression drives
/// its burst rate and burst height. sign -1 flips the direction.
struct ChannelLink {
  int channel = 0;
  SocialSkill skill = SocialSkill::PositiveEmotion;
  double sign = 1.0;
};

struct PlantedBias {
  std::string axis;   // "gender" or "race"; empty disables
  std::string group;  // group name within that axis
  double delta = 0.0; // shift added to that group's ratings, rating units
};

struct SynthConfig {
  int candidates = 60;
  int videos_per_candidate = 3;
  int raters = 5;
  int frames_per_video = 120;
  double fps = 15.0;
  int prosody_dim = 64;

  // Aligned with the enum orders in types.hpp.
  std::vector<double> gender_proportions = {0.5, 0.5};
  std::vector<double> race_proportions = {0.233, 0.075, 0.088, 0.507, 0.097};
  std::vector<double> country_proportions = {0.507, 0.192, 0.225, 0.076};

  double latent_mean = 2.0;
  double latent_sd = 0.6;
  /// Per-video deviation of expressed behavior around the candidate latent.
  /// Negative means "derive from target_consensus_r".
  double video_noise_sd = -1.0;
  double rater_noise_sd = 0.5;
  double rater_bias_sd = 0.15;
  /// Nominal Pearson correlation between candidate latents and consensus
  /// ratings; used to derive video noise when video_noise_sd < 0.
  double target_consensus_r = 0.75;

  /// Channel links; empty means "use the default expert table".
  std::vector<ChannelLink> links;
  double burst_rate_per_s = 0.5;
  double burst_rate_gain = 0.35;
  double burst_height = 1.2;
  double burst_height_gain = 0.35;

  double prosody_signal_scale = 1.0;
  double prosody_group_scale = 0.7;
  double prosody_noise_sd = 0.08;

  bool emit_embeddings = false;
  int embedding_dim = 16;
  double embedding_noise_sd = 0.3;

  double prob_invalid_frame = 0.03;
  double prob_not_clear = 0.0;
  double prob_cannot_say = 0.0;

  PlantedBias planted_bias;
  std::set<int> incoherent_raters;       // rater indices scoring uniform noise
  std::map<int, double> rater_offsets;   // rater index -> additive offset

  bool emit_outcomes = true;
  int outcome_levels = 2;  // 2 = hired/not, 3 = three-level scale
  double outcome_noise_sd = 0.5;
};

/// Default expert channel->skill link table; mirrors default_indicators().
const std::vector<ChannelLink>& default_links();

struct SynthGroundTruth {
  /// candidate_id -> latent per skill (enum order).
  std::vector<std::pair<std::string, std::array<double, kNumSkills>>>
      candidate_latents;
  /// video_id -> expressed level per skill.
  std::vector<std::pair<std::string, std::array<double, kNumSkills>>>
      video_expression;
  /// candidate_id -> (raw outcome score, discretized outcome).
  std::vector<std::pair<std::string, std::pair<double, int>>> outcomes;

  std::array<double, kNumSkills> latent_of(const std::string& candidate) const;
};

struct SynthResult {
  Dataset dataset;
  SynthGroundTruth truth;
};

/// Deterministic pure function of (config, seed).
SynthResult synthesize(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace fairgrade
