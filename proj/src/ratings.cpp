#include "fairgrade/ratings.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fairgrade/rng.hpp"
#include "fairgrade/stats.hpp"

namespace fairgrade {

namespace {

// rater -> (video, skill) -> usable score, over non-excluded videos.
using ScoreTable =
    std::map<std::string, std::map<std::pair<std::size_t, SocialSkill>, double>>;

ScoreTable build_score_table(const Dataset& ds) {
  ScoreTable table;
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    const auto& video = ds.videos[i];
    if (video.excluded) continue;
    for (const auto& [skill, entries] : video.ratings) {
      for (const auto& e : entries) {
        if (e.score.usable()) {
          table[e.rater_id][{i, skill}] = e.score.value();
        }
      }
    }
  }
  return table;
}

}  // namespace

std::vector<std::string> ConsensusRatings::candidates() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : per_candidate) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

std::vector<RaterStats> rater_stats(const Dataset& ds, int min_shared) {
  const ScoreTable table = build_score_table(ds);

  std::vector<RaterStats> out;
  for (const auto& rater : ds.raters) {
    RaterStats st;
    st.rater_id = rater;
    const auto self_it = table.find(rater);
    if (self_it == table.end()) {
      st.avg_inter_rater_r = std::numeric_limits<double>::quiet_NaN();
      out.push_back(st);
      continue;
    }
    const auto& own = self_it->second;

    double r_sum = 0.0;
    int r_count = 0;
    for (const auto& other : ds.raters) {
      if (other == rater) continue;
      const auto other_it = table.find(other);
      if (other_it == table.end()) continue;
      std::vector<double> mine, theirs;
      for (const auto& [key, score] : own) {
        const auto hit = other_it->second.find(key);
        if (hit != other_it->second.end()) {
          mine.push_back(score);
          theirs.push_back(hit->second);
        }
      }
      if (static_cast<int>(mine.size()) < min_shared) continue;
      const double r = stats::pearson(mine, theirs);
      if (std::isfinite(r)) {
        r_sum += r;
        ++r_count;
      }
    }
    st.avg_inter_rater_r = r_count > 0
                               ? r_sum / r_count
                               : std::numeric_limits<double>::quiet_NaN();

    double diff_sum = 0.0;
    std::size_t diff_count = 0;
    for (const auto& [key, score] : own) {
      double others_sum = 0.0;
      int others_n = 0;
      for (const auto& [other, scores] : table) {
        if (other == rater) continue;
        const auto hit = scores.find(key);
        if (hit != scores.end()) {
          others_sum += hit->second;
          ++others_n;
        }
      }
      if (others_n > 0) {
        diff_sum += score - others_sum / others_n;
        ++diff_count;
      }
    }
    st.mean_diff = diff_count > 0 ? diff_sum / diff_count : 0.0;
    st.shared_scores = diff_count;
    out.push_back(st);
  }
  return out;
}

RaterFilterResult filter_raters(const Dataset& ds, double r_min,
                                double diff_max, int min_shared) {
  const auto initial = rater_stats(ds, min_shared);

  std::set<std::string> to_remove;
  RaterFilterResult result;
  for (const auto& st : initial) {
    const bool bad_r =
        std::isfinite(st.avg_inter_rater_r) && st.avg_inter_rater_r < r_min;
    const bool bad_diff = std::fabs(st.mean_diff) > diff_max;
    if (bad_r || bad_diff) {
      to_remove.insert(st.rater_id);
      result.removed.push_back(st);
    }
  }
  require(to_remove.size() < ds.raters.size(), Cond::AllRatersRemoved,
          "no rater passes the agreement thresholds");

  Dataset out = ds;
  out.raters.clear();
  for (const auto& r : ds.raters) {
    if (!to_remove.count(r)) out.raters.push_back(r);
  }
  for (auto& video : out.videos) {
    for (auto it = video.ratings.begin(); it != video.ratings.end();) {
      auto& entries = it->second;
      std::erase_if(entries, [&](const RatingEntry& e) {
        return to_remove.count(e.rater_id) > 0;
      });
      it = entries.empty() ? video.ratings.erase(it) : std::next(it);
    }
    if (video.ratings.empty() && !video.excluded) {
      video.excluded = true;
      video.exclusion_reason = ExclusionReason::CannotSay;
    }
  }

  result.survivors = rater_stats(out, min_shared);
  result.dataset = std::move(out);
  return result;
}

ConsensusRatings consensus(const Dataset& ds) {
  ConsensusRatings cr;
  std::map<std::pair<std::string, SocialSkill>, std::pair<double, int>> acc;
  for (const auto& video : ds.videos) {
    if (video.excluded) continue;
    for (const auto& [skill, entries] : video.ratings) {
      double sum = 0.0;
      int n = 0;
      for (const auto& e : entries) {
        if (e.score.usable()) {
          sum += e.score.value();
          ++n;
        }
      }
      require(n > 0, Cond::NoUsableScores, "video ", video.video_id,
              ", skill ", skill_name(skill));
      const double mean = sum / n;
      cr.per_video[{video.video_id, skill}] = mean;
      auto& slot = acc[{video.candidate_id, skill}];
      slot.first += mean;
      slot.second += 1;
    }
  }
  for (const auto& [key, slot] : acc) {
    cr.per_candidate[key] = slot.first / slot.second;
  }
  return cr;
}

std::map<SocialSkill, double> inter_rater_agreement(const Dataset& ds,
                                                    int min_shared) {
  std::map<SocialSkill, double> out;
  for (SocialSkill skill : ds.skills) {
    double r_sum = 0.0;
    int pairs = 0;
    for (std::size_t a = 0; a < ds.raters.size(); ++a) {
      for (std::size_t b = a + 1; b < ds.raters.size(); ++b) {
        std::vector<double> xa, xb;
        for (const auto& video : ds.videos) {
          if (video.excluded) continue;
          const auto it = video.ratings.find(skill);
          if (it == video.ratings.end()) continue;
          double va = 0.0, vb = 0.0;
          bool ha = false, hb = false;
          for (const auto& e : it->second) {
            if (!e.score.usable()) continue;
            if (e.rater_id == ds.raters[a]) {
              va = e.score.value();
              ha = true;
            } else if (e.rater_id == ds.raters[b]) {
              vb = e.score.value();
              hb = true;
            }
          }
          if (ha && hb) {
            xa.push_back(va);
            xb.push_back(vb);
          }
        }
        if (static_cast<int>(xa.size()) < min_shared) continue;
        const double r = stats::pearson(xa, xb);
        if (std::isfinite(r)) {
          r_sum += r;
          ++pairs;
        }
      }
    }
    require(pairs > 0, Cond::InsufficientOverlap,
            "no rater pair shares enough videos for ", skill_name(skill));
    out[skill] = r_sum / pairs;
  }
  return out;
}

std::vector<double> bootstrap_rater_variance(const Dataset& ds, int max_raters,
                                             int B, std::uint64_t seed) {
  require(max_raters >= 1 && B >= 2, Cond::InvalidConfig,
          "bootstrap needs max_raters >= 1 and B >= 2");

  // Rated cells with enough usable scores, in dataset order.
  std::vector<std::vector<double>> cells;
  for (const auto& video : ds.videos) {
    if (video.excluded) continue;
    for (const auto& [skill, entries] : video.ratings) {
      std::vector<double> scores;
      for (const auto& e : entries) {
        if (e.score.usable()) scores.push_back(e.score.value());
      }
      if (static_cast<int>(scores.size()) >= max_raters) {
        cells.push_back(std::move(scores));
      }
    }
  }
  require(!cells.empty(), Cond::TooFewRaters, "no rated cell has ",
          max_raters, " usable scores");

  std::vector<double> curve(max_raters, 0.0);
  for (int n = 1; n <= max_raters; ++n) {
    double total = 0.0;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
      Rng rng(derive_seed(seed, ci, static_cast<std::uint64_t>(n)));
      const auto& scores = cells[ci];
      std::vector<double> means(B);
      for (int b = 0; b < B; ++b) {
        double sum = 0.0;
        for (int k = 0; k < n; ++k) {
          sum += scores[rng.uniform_index(scores.size())];
        }
        means[b] = sum / n;
      }
      const double sd = stats::sample_sd(means);
      total += sd * sd;
    }
    curve[n - 1] = total / cells.size();
  }
  return curve;
}

InterParameterCorrelations inter_parameter_correlations(
    const ConsensusRatings& cr, double calmness_threshold) {
  // Candidates rated on all four skills.
  std::array<std::vector<double>, kNumSkills> columns;
  for (const auto& cid : cr.candidates()) {
    std::array<double, kNumSkills> row;
    bool complete = true;
    for (int s = 0; s < kNumSkills; ++s) {
      const auto it = cr.per_candidate.find({cid, kAllSkills[s]});
      if (it == cr.per_candidate.end()) {
        complete = false;
        break;
      }
      row[s] = it->second;
    }
    if (complete) {
      for (int s = 0; s < kNumSkills; ++s) columns[s].push_back(row[s]);
    }
  }

  InterParameterCorrelations out;
  out.matrix.setIdentity();
  for (int a = 0; a < kNumSkills; ++a) {
    for (int b = a + 1; b < kNumSkills; ++b) {
      const double r = stats::pearson(columns[a], columns[b]);
      out.matrix(a, b) = r;
      out.matrix(b, a) = r;
    }
  }
  const double calm_conf =
      out.matrix(static_cast<int>(SocialSkill::Calmness),
                 static_cast<int>(SocialSkill::Confidence));
  out.drop_calmness = calm_conf > calmness_threshold;
  return out;
}

}  // namespace fairgrade
