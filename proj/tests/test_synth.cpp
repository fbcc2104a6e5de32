#include <doctest.h>

#include <map>

#include "fairgrade/stats.hpp"
#include "fairgrade/synth.hpp"

using namespace fairgrade;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.candidates = 20;
  cfg.videos_per_candidate = 2;
  cfg.frames_per_video = 30;
  cfg.prosody_dim = 8;
  cfg.prob_invalid_frame = 0.0;
  return cfg;
}

/// Consensus by direct averaging of usable scores, videos then candidate.
std::map<std::string, double> naive_candidate_consensus(const Dataset& ds,
                                                        SocialSkill skill) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& [cid, idxs] : ds.by_candidate()) {
    for (std::size_t i : idxs) {
      const auto& entries = ds.videos[i].ratings.at(skill);
      double sum = 0.0;
      int n = 0;
      for (const auto& e : entries) {
        if (e.score.usable()) {
          sum += e.score.value();
          ++n;
        }
      }
      if (n > 0) {
        acc[cid].first += sum / n;
        acc[cid].second += 1;
      }
    }
  }
  std::map<std::string, double> out;
  for (const auto& [cid, p] : acc) out[cid] = p.first / p.second;
  return out;
}

}  // namespace

TEST_CASE("same seed gives identical datasets, different seeds differ") {
  const auto cfg = small_config();
  const auto a = synthesize(cfg, 99);
  const auto b = synthesize(cfg, 99);
  REQUIRE(a.dataset.videos.size() == b.dataset.videos.size());
  for (std::size_t i = 0; i < a.dataset.videos.size(); ++i) {
    CHECK(a.dataset.videos[i].frames == b.dataset.videos[i].frames);
    CHECK(a.dataset.videos[i].prosody == b.dataset.videos[i].prosody);
    CHECK(a.dataset.videos[i].ratings == b.dataset.videos[i].ratings);
  }
  const auto c = synthesize(cfg, 100);
  CHECK(a.dataset.videos[0].frames.channels[0] !=
        c.dataset.videos[0].frames.channels[0]);
}

TEST_CASE("noiseless raters agree exactly") {
  auto cfg = small_config();
  cfg.rater_noise_sd = 0.0;
  cfg.rater_bias_sd = 0.0;
  cfg.video_noise_sd = 0.0;
  const auto res = synthesize(cfg, 5);
  for (const auto& video : res.dataset.videos) {
    for (const auto& [skill, entries] : video.ratings) {
      for (const auto& e : entries) {
        CHECK(e.score == entries.front().score);
      }
    }
  }
}

TEST_CASE("latent-consensus correlation lands near the configured target") {
  SynthConfig cfg;
  cfg.candidates = 400;
  cfg.videos_per_candidate = 2;
  cfg.frames_per_video = 12;  // rating stats do not depend on the curves
  cfg.prosody_dim = 4;
  cfg.target_consensus_r = 0.75;
  const auto res = synthesize(cfg, 2024);

  for (SocialSkill skill : {SocialSkill::PositiveEmotion, SocialSkill::Confidence}) {
    const auto consensus = naive_candidate_consensus(res.dataset, skill);
    std::vector<double> lat, con;
    for (const auto& [cid, latent] : res.truth.candidate_latents) {
      lat.push_back(latent[static_cast<int>(skill)]);
      con.push_back(consensus.at(cid));
    }
    const double r = stats::pearson(lat, con);
    CHECK(r == doctest::Approx(cfg.target_consensus_r).epsilon(0.068));
  }
}

TEST_CASE("AU channels stay in range and linked bursts move with the latent") {
  auto cfg = small_config();
  cfg.candidates = 120;
  cfg.videos_per_candidate = 1;
  cfg.frames_per_video = 150;
  cfg.video_noise_sd = 0.0;
  const auto res = synthesize(cfg, 11);

  const int au12 = channel_index("AU12");
  std::vector<double> latents, channel_means;
  for (std::size_t i = 0; i < res.dataset.videos.size(); ++i) {
    const auto& v = res.dataset.videos[i];
    for (int c = 0; c < kNumActionUnits; ++c) {
      for (double x : v.frames.channels[c]) {
        CHECK(x >= 0.0);
        CHECK(x <= 5.0);
      }
    }
    double m = 0.0;
    for (double x : v.frames.channels[au12]) m += x;
    channel_means.push_back(m / v.frames.channels[au12].size());
    latents.push_back(res.truth
                          .latent_of(v.candidate_id)[static_cast<int>(
                              SocialSkill::PositiveEmotion)]);
  }
  // Positive link: higher positive-emotion latent, more lip-corner activity.
  CHECK(stats::pearson(latents, channel_means) > 0.3);
}

TEST_CASE("invalid config values are rejected") {
  auto cfg = small_config();
  cfg.candidates = 0;
  CHECK_THROWS_AS(synthesize(cfg, 1), Error);

  cfg = small_config();
  cfg.race_proportions = {0.5, 0.2, 0.1, 0.1, 0.2};  // sums to 1.1
  CHECK_THROWS_AS(synthesize(cfg, 1), Error);

  cfg = small_config();
  cfg.incoherent_raters = {99};
  CHECK_THROWS_AS(synthesize(cfg, 1), Error);
}

TEST_CASE("outcomes are emitted per candidate") {
  auto cfg = small_config();
  cfg.outcome_levels = 3;
  const auto res = synthesize(cfg, 3);
  CHECK(res.truth.outcomes.size() == static_cast<std::size_t>(cfg.candidates));
  for (const auto& [cid, oc] : res.truth.outcomes) {
    CHECK(oc.second >= 0);
    CHECK(oc.second <= 2);
  }
}
