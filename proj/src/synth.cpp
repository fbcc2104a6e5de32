#include "fairgrade/synth.hpp"

#include <algorithm>
#include <cmath>

#include "fairgrade/features.hpp"
#include "fairgrade/rng.hpp"

namespace fairgrade {

// The generator drives exactly the channels the default expert vote marks,
// in the voted direction, so expert-guided models have signal to find.
const std::vector<ChannelLink>& default_links() {
  static const std::vector<ChannelLink> links = [] {
    std::vector<ChannelLink> out;
    const IndicatorSet ind = default_indicators();
    for (const auto& [skill, channels] : ind.positive) {
      for (int c : channels) out.push_back({c, skill, 1.0});
    }
    for (const auto& [skill, channels] : ind.negative) {
      for (int c : channels) out.push_back({c, skill, -1.0});
    }
    return out;
  }();
  return links;
}

namespace {

void check_proportions(const std::vector<double>& p, std::size_t expected,
                       const char* what) {
  require(p.size() == expected, Cond::InvalidConfig, what, " needs ", expected,
          " entries");
  double sum = 0.0;
  for (double v : p) {
    require(v >= 0.0, Cond::InvalidConfig, what, " has a negative entry");
    sum += v;
  }
  require(std::fabs(sum - 1.0) <= 1e-9, Cond::InvalidConfig, what,
          " must sum to 1, got ", sum);
}

void validate(const SynthConfig& c) {
  require(c.candidates > 0, Cond::InvalidConfig, "candidates must be positive");
  require(c.videos_per_candidate > 0, Cond::InvalidConfig,
          "videos_per_candidate must be positive");
  require(c.raters > 0, Cond::InvalidConfig, "raters must be positive");
  require(c.frames_per_video >= 3, Cond::InvalidConfig,
          "frames_per_video must be at least 3");
  require(c.fps > 0.0, Cond::InvalidConfig, "fps must be positive");
  require(c.prosody_dim > 0, Cond::InvalidConfig, "prosody_dim must be positive");
  require(c.latent_sd > 0.0, Cond::InvalidConfig, "latent_sd must be positive");
  require(c.rater_noise_sd >= 0.0 && c.rater_bias_sd >= 0.0,
          Cond::InvalidConfig, "noise levels must be non-negative");
  require(c.target_consensus_r > 0.0 && c.target_consensus_r <= 1.0,
          Cond::InvalidConfig, "target_consensus_r must be in (0, 1]");
  check_proportions(c.gender_proportions, kAllGenders.size(), "gender_proportions");
  check_proportions(c.race_proportions, kAllRaces.size(), "race_proportions");
  check_proportions(c.country_proportions, kAllCountries.size(),
                    "country_proportions");
  if (!c.planted_bias.axis.empty()) {
    require(c.planted_bias.axis == "gender" || c.planted_bias.axis == "race",
            Cond::InvalidConfig, "planted_bias.axis must be gender or race");
  }
  for (int idx : c.incoherent_raters) {
    require(idx >= 0 && idx < c.raters, Cond::InvalidConfig,
            "incoherent rater index out of range: ", idx);
  }
  for (const auto& [idx, _] : c.rater_offsets) {
    require(idx >= 0 && idx < c.raters, Cond::InvalidConfig,
            "rater offset index out of range: ", idx);
  }
}

int draw_category(Rng& rng, const std::vector<double>& proportions) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < proportions.size(); ++i) {
    acc += proportions[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(proportions.size()) - 1;
}

double derive_video_noise_sd(const SynthConfig& c) {
  if (c.video_noise_sd >= 0.0) return c.video_noise_sd;
  // Consensus = latent + e with
  //   Var(e) = vn^2/V + (rn^2 + 1/12)/(V*R)
  // (1/12 is the quantization variance of rounding to rubric levels).
  // Solve Var(e) = latent_sd^2 (1/r^2 - 1) for vn.
  const double r = c.target_consensus_r;
  const double v = static_cast<double>(c.videos_per_candidate);
  const double n = static_cast<double>(c.raters);
  const double needed = c.latent_sd * c.latent_sd * (1.0 / (r * r) - 1.0);
  const double rater_part =
      (c.rater_noise_sd * c.rater_noise_sd + 1.0 / 12.0) / (v * n);
  const double vn2 = v * (needed - rater_part);
  return vn2 > 0.0 ? std::sqrt(vn2) : 0.0;
}

std::string zero_pad(int value, int width) {
  std::string s = std::to_string(value);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

std::array<double, kNumSkills> SynthGroundTruth::latent_of(
    const std::string& candidate) const {
  for (const auto& [id, latent] : candidate_latents) {
    if (id == candidate) return latent;
  }
  raise(Cond::InvalidConfig, "unknown candidate in ground truth: ", candidate);
}

SynthResult synthesize(const SynthConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(derive_seed(seed, 0x5a17));

  const auto& links = cfg.links.empty() ? default_links() : cfg.links;
  const double video_noise_sd = derive_video_noise_sd(cfg);
  const int T = cfg.frames_per_video;
  const double duration = T / cfg.fps;

  SynthResult result;
  Dataset& ds = result.dataset;
  ds.prosody_dim = cfg.prosody_dim;
  ds.embedding_dim = cfg.emit_embeddings ? cfg.embedding_dim : 0;
  ds.skills.assign(kAllSkills.begin(), kAllSkills.end());
  for (int r = 0; r < cfg.raters; ++r) {
    ds.raters.push_back("r" + std::to_string(r + 1));
  }

  // Fixed structure vectors, drawn before any per-candidate sampling.
  const int P = cfg.prosody_dim;
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(P));
  std::array<Eigen::VectorXd, kNumSkills> skill_dirs;
  for (auto& dir : skill_dirs) {
    dir.resize(P);
    for (int i = 0; i < P; ++i) dir[i] = rng.normal() * inv_sqrt_p;
    dir *= cfg.prosody_signal_scale;
  }
  const int n_groups =
      static_cast<int>(kAllGenders.size() * kAllRaces.size());
  std::vector<Eigen::VectorXd> group_dirs(n_groups);
  for (auto& dir : group_dirs) {
    dir.resize(P);
    for (int i = 0; i < P; ++i) dir[i] = rng.normal() * inv_sqrt_p;
    dir *= cfg.prosody_group_scale;
  }
  Eigen::MatrixXd embed_mix;
  if (cfg.emit_embeddings) {
    embed_mix.resize(cfg.embedding_dim, kNumChannels);
    const double s = 1.0 / std::sqrt(static_cast<double>(kNumChannels));
    for (int i = 0; i < embed_mix.rows(); ++i) {
      for (int j = 0; j < embed_mix.cols(); ++j) embed_mix(i, j) = rng.normal() * s;
    }
  }

  std::vector<double> rater_bias(cfg.raters);
  for (auto& b : rater_bias) b = rng.normal(0.0, cfg.rater_bias_sd);

  const int cand_width =
      static_cast<int>(std::to_string(cfg.candidates).size());

  for (int ci = 0; ci < cfg.candidates; ++ci) {
    const std::string cid = "c" + zero_pad(ci + 1, cand_width);

    GroupTags tags;
    tags.gender = kAllGenders[draw_category(rng, cfg.gender_proportions)];
    tags.race = kAllRaces[draw_category(rng, cfg.race_proportions)];
    tags.country = kAllCountries[draw_category(rng, cfg.country_proportions)];

    double bias_delta = 0.0;
    if (!cfg.planted_bias.axis.empty()) {
      const bool match =
          (cfg.planted_bias.axis == "gender" &&
           gender_name(tags.gender) == cfg.planted_bias.group) ||
          (cfg.planted_bias.axis == "race" &&
           race_name(tags.race) == cfg.planted_bias.group);
      if (match) bias_delta = cfg.planted_bias.delta;
    }

    std::array<double, kNumSkills> latent;
    for (double& l : latent) l = rng.normal(cfg.latent_mean, cfg.latent_sd);
    result.truth.candidate_latents.push_back({cid, latent});

    for (int vi = 0; vi < cfg.videos_per_candidate; ++vi) {
      VideoRecord rec;
      rec.candidate_id = cid;
      rec.video_id = cid + "_v" + std::to_string(vi + 1);
      rec.tags = tags;
      rec.frames.fps = cfg.fps;
      rec.frames.channels.resize(kNumChannels);

      std::array<double, kNumSkills> expressed;
      for (int s = 0; s < kNumSkills; ++s) {
        expressed[s] = latent[s] + rng.normal(0.0, video_noise_sd);
      }
      result.truth.video_expression.push_back({rec.video_id, expressed});

      std::array<double, kNumSkills> z;
      for (int s = 0; s < kNumSkills; ++s) {
        z[s] = std::clamp((expressed[s] - cfg.latent_mean) / cfg.latent_sd,
                          -2.5, 2.5);
      }

      for (int c = 0; c < kNumChannels; ++c) {
        double drive = 0.0;
        for (const auto& link : links) {
          if (link.channel == c) {
            drive += link.sign * z[static_cast<int>(link.skill)];
          }
        }
        const bool au = is_action_unit(c);
        std::vector<double> series(T);

        const double base = au ? rng.uniform(0.1, 0.4) : 0.0;
        double wander = 0.0;
        const double wander_sd = au ? 0.02 : 0.06;
        for (int t = 0; t < T; ++t) {
          wander = 0.95 * wander + rng.normal(0.0, wander_sd);
          series[t] = base + wander;
        }

        const double rate = std::max(
            0.05, cfg.burst_rate_per_s * (1.0 + cfg.burst_rate_gain * drive));
        const int n_bursts = rng.poisson(rate * duration);
        for (int b = 0; b < n_bursts; ++b) {
          const double center = rng.uniform(0.0, duration);
          const double width = rng.uniform(0.25, 0.6);
          double height =
              std::max(0.1, cfg.burst_height *
                                (1.0 + cfg.burst_height_gain * drive)) *
              rng.uniform(0.7, 1.3);
          if (!au && rng.uniform() < 0.5) height = -height;
          for (int t = 0; t < T; ++t) {
            const double dt = t / cfg.fps - center;
            series[t] += height * std::exp(-dt * dt / (2.0 * width * width));
          }
        }
        if (au) {
          for (double& v : series) v = std::clamp(v, 0.0, 5.0);
        }
        rec.frames.channels[c] = std::move(series);
      }

      rec.frames.face_confidence.resize(T);
      for (int t = 0; t < T; ++t) {
        rec.frames.face_confidence[t] = rng.uniform() < cfg.prob_invalid_frame
                                            ? rng.uniform(0.0, 0.7)
                                            : rng.uniform(0.8, 1.0);
      }

      rec.prosody = Eigen::VectorXd::Zero(P);
      const int gi = static_cast<int>(tags.gender) *
                         static_cast<int>(kAllRaces.size()) +
                     static_cast<int>(tags.race);
      rec.prosody += group_dirs[gi];
      for (int s = 0; s < kNumSkills; ++s) rec.prosody += z[s] * skill_dirs[s];
      for (int i = 0; i < P; ++i) {
        rec.prosody[i] += rng.normal(0.0, cfg.prosody_noise_sd);
      }

      if (cfg.emit_embeddings) {
        rec.embeddings.reserve(T);
        Eigen::VectorXd ff(kNumChannels);
        for (int t = 0; t < T; ++t) {
          for (int c = 0; c < kNumChannels; ++c) {
            ff[c] = rec.frames.channels[c][t];
          }
          Eigen::VectorXd e = embed_mix * ff;
          for (int i = 0; i < e.size(); ++i) {
            e[i] += rng.normal(0.0, cfg.embedding_noise_sd);
          }
          rec.embeddings.push_back(std::move(e));
        }
      }

      for (SocialSkill skill : kAllSkills) {
        auto& entries = rec.ratings[skill];
        for (int r = 0; r < cfg.raters; ++r) {
          RatingEntry entry;
          entry.rater_id = ds.raters[r];

          const double u_special = rng.uniform();
          if (u_special < cfg.prob_not_clear) {
            entry.score = RubricScore::not_clear();
          } else if (u_special < cfg.prob_not_clear + cfg.prob_cannot_say) {
            entry.score = RubricScore::na();
          } else if (cfg.incoherent_raters.count(r)) {
            entry.score =
                RubricScore::level(static_cast<int>(rng.uniform_index(5)));
          } else {
            double raw = expressed[static_cast<int>(skill)] + bias_delta +
                         rater_bias[r] + rng.normal(0.0, cfg.rater_noise_sd);
            const auto it = cfg.rater_offsets.find(r);
            if (it != cfg.rater_offsets.end()) raw += it->second;
            const int rounded =
                std::clamp(static_cast<int>(std::lround(raw)), 0, 4);
            entry.score = RubricScore::level(rounded);
          }
          entries.push_back(std::move(entry));
        }
      }

      ds.videos.push_back(std::move(rec));
    }
  }

  if (cfg.emit_outcomes) {
    std::vector<double> raw(cfg.candidates);
    for (int ci = 0; ci < cfg.candidates; ++ci) {
      const auto& latent = result.truth.candidate_latents[ci].second;
      raw[ci] = 0.2 * latent[static_cast<int>(SocialSkill::PositiveEmotion)] +
                0.5 * latent[static_cast<int>(SocialSkill::Confidence)] +
                0.3 * latent[static_cast<int>(SocialSkill::Engagement)] +
                rng.normal(0.0, cfg.outcome_noise_sd);
    }
    std::vector<double> sorted = raw;
    std::sort(sorted.begin(), sorted.end());
    for (int ci = 0; ci < cfg.candidates; ++ci) {
      int level = 0;
      if (cfg.outcome_levels <= 2) {
        level = raw[ci] >= sorted[sorted.size() / 2] ? 1 : 0;
      } else {
        const double t1 = sorted[sorted.size() / 3];
        const double t2 = sorted[2 * sorted.size() / 3];
        level = raw[ci] >= t2 ? 2 : (raw[ci] >= t1 ? 1 : 0);
      }
      result.truth.outcomes.push_back(
          {result.truth.candidate_latents[ci].first, {raw[ci], level}});
    }
  }

  return result;
}

}  // namespace fairgrade
