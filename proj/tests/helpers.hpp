#pragma once

// Shared fixture builders for the unit suites.

#include <string>
#include <vector>

#include "fairgrade/types.hpp"

namespace testutil {

using namespace fairgrade;

/// A minimal valid record: constant-ish channels, N frames, one rated skill.
inline VideoRecord make_record(const std::string& vid, const std::string& cid,
                               int frames = 6) {
  VideoRecord rec;
  rec.video_id = vid;
  rec.candidate_id = cid;
  rec.frames.fps = 15.0;
  rec.frames.channels.resize(kNumChannels);
  for (int c = 0; c < kNumChannels; ++c) {
    rec.frames.channels[c].assign(frames, is_action_unit(c) ? 1.0 : 0.0);
    rec.frames.channels[c][frames / 2] += 0.5;  // one interior bump
  }
  rec.frames.face_confidence.assign(frames, 0.95);
  rec.prosody = Eigen::VectorXd::Constant(4, 0.25);
  rec.ratings[SocialSkill::Confidence] = {{"r1", RubricScore::level(3)},
                                          {"r2", RubricScore::level(2)}};
  rec.tags.gender = Gender::Female;
  rec.tags.race = Race::Asian;
  rec.tags.country = Country::UK;
  return rec;
}

inline Dataset make_dataset(int candidates = 2, int videos_each = 1) {
  Dataset ds;
  ds.prosody_dim = 4;
  ds.skills = {SocialSkill::Confidence};
  ds.raters = {"r1", "r2"};
  for (int c = 0; c < candidates; ++c) {
    const std::string cid = "c" + std::to_string(c + 1);
    for (int v = 0; v < videos_each; ++v) {
      ds.videos.push_back(
          make_record(cid + "_v" + std::to_string(v + 1), cid));
    }
  }
  return ds;
}

}  // namespace testutil
