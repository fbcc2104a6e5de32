#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fairgrade/ratings.hpp"
#include "fairgrade/rng.hpp"
#include "fairgrade/stats.hpp"
#include "helpers.hpp"

using namespace fairgrade;

namespace {

/// Dataset with one skill and a caller-supplied score table:
/// scores[v][r] = integer 0..4, or -1 (not clear), or -2 (NA), or INT_MIN skip.
Dataset table_dataset(const std::vector<std::vector<int>>& scores,
                      int videos_per_candidate = 1) {
  Dataset ds;
  ds.prosody_dim = 4;
  ds.skills = {SocialSkill::Confidence};
  const int n_raters = static_cast<int>(scores.front().size());
  for (int r = 0; r < n_raters; ++r) ds.raters.push_back("r" + std::to_string(r + 1));
  for (std::size_t v = 0; v < scores.size(); ++v) {
    const std::string cid = "c" + std::to_string(v / videos_per_candidate + 1);
    auto rec = testutil::make_record("v" + std::to_string(v + 1), cid);
    rec.ratings.clear();
    std::vector<RatingEntry> entries;
    for (int r = 0; r < n_raters; ++r) {
      const int s = scores[v][r];
      if (s == INT_MIN) continue;
      RatingEntry e;
      e.rater_id = ds.raters[r];
      e.score = s == -2   ? RubricScore::na()
                : s == -1 ? RubricScore::not_clear()
                          : RubricScore::level(s);
      entries.push_back(e);
    }
    rec.ratings[SocialSkill::Confidence] = entries;
    ds.videos.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace

TEST_CASE("consensus arithmetic") {
  auto ds = table_dataset({{2, 3, 4}});
  CHECK(consensus(ds).per_video.at({"v1", SocialSkill::Confidence}) ==
        doctest::Approx(3.0));

  auto ds2 = table_dataset({{3, -2, 3}});
  CHECK(consensus(ds2).per_video.at({"v1", SocialSkill::Confidence}) ==
        doctest::Approx(3.0));

  auto ds3 = table_dataset({{2, 2}, {4, 4}}, 2);  // one candidate, two videos
  CHECK(consensus(ds3).per_candidate.at({"c1", SocialSkill::Confidence}) ==
        doctest::Approx(3.0));
}

TEST_CASE("consensus raises NoUsableScores on an all-NA cell") {
  auto ds = table_dataset({{-2, -2}});
  CHECK_THROWS_AS(consensus(ds), Error);
}

TEST_CASE("consensus ignores excluded videos and is order invariant") {
  auto ds = table_dataset({{2, 2}, {4, 4}, {0, 0}}, 3);
  ds.videos[2].excluded = true;
  ds.videos[2].exclusion_reason = ExclusionReason::NotClear;
  const auto base = consensus(ds);
  CHECK(base.per_candidate.at({"c1", SocialSkill::Confidence}) ==
        doctest::Approx(3.0));

  Dataset shuffled = ds;
  std::swap(shuffled.videos[0], shuffled.videos[1]);
  std::swap(shuffled.raters[0], shuffled.raters[1]);
  const auto again = consensus(shuffled);
  CHECK(again.per_candidate == base.per_candidate);
  CHECK(again.per_video == base.per_video);
}

TEST_CASE("a rater matching the consensus leaves it unchanged") {
  auto ds = table_dataset({{2, 4}, {1, 3}, {0, 4}});
  const auto before = consensus(ds);
  Dataset extended = ds;
  extended.raters.push_back("rx");
  for (auto& video : extended.videos) {
    auto& entries = video.ratings[SocialSkill::Confidence];
    double sum = 0.0;
    for (const auto& e : entries) sum += e.score.value();
    entries.push_back({"rx", RubricScore::level(
                                 static_cast<int>(sum / entries.size()))});
  }
  const auto after = consensus(extended);
  for (const auto& [key, value] : before.per_video) {
    CHECK(after.per_video.at(key) == doctest::Approx(value).epsilon(1e-12));
  }
}

TEST_CASE("identical raters are all kept with perfect agreement") {
  std::vector<std::vector<int>> rows;
  Rng rng(3);
  for (int v = 0; v < 10; ++v) {
    const int s = static_cast<int>(rng.uniform_index(5));
    rows.push_back({s, s, s});
  }
  const auto ds = table_dataset(rows);
  const auto stats_list = rater_stats(ds);
  for (const auto& st : stats_list) {
    CHECK(st.avg_inter_rater_r == doctest::Approx(1.0));
    CHECK(st.mean_diff == doctest::Approx(0.0));
  }
  const auto res = filter_raters(ds);
  CHECK(res.removed.empty());
}

TEST_CASE("an incoherent rater is removed by the correlation rule") {
  // Six consistent raters follow a per-video level; the seventh is noise.
  Rng rng(17);
  std::vector<std::vector<int>> rows;
  for (int v = 0; v < 40; ++v) {
    const int level = static_cast<int>(rng.uniform_index(5));
    std::vector<int> row(7, level);
    row[6] = static_cast<int>(rng.uniform_index(5));
    rows.push_back(row);
  }
  const auto ds = table_dataset(rows);
  const auto stats_list = rater_stats(ds);
  CHECK(stats_list[6].avg_inter_rater_r < 0.2);

  const auto res = filter_raters(ds);
  REQUIRE(res.removed.size() == 1);
  CHECK(res.removed[0].rater_id == "r7");
  CHECK(res.dataset.raters.size() == 6);
  for (const auto& video : res.dataset.videos) {
    for (const auto& [skill, entries] : video.ratings) {
      for (const auto& e : entries) CHECK(e.rater_id != "r7");
    }
  }
}

TEST_CASE("an offset rater is removed by the mean-diff rule") {
  Rng rng(5);
  std::vector<std::vector<int>> rows;
  for (int v = 0; v < 30; ++v) {
    const int level = static_cast<int>(rng.uniform_index(3));  // 0..2
    rows.push_back({level, level, level + 2});  // corr 1, offset +2
  }
  const auto ds = table_dataset(rows);
  const auto stats_list = rater_stats(ds);
  CHECK(stats_list[2].avg_inter_rater_r == doctest::Approx(1.0));
  CHECK(stats_list[2].mean_diff == doctest::Approx(2.0));

  const auto res = filter_raters(ds);
  REQUIRE(res.removed.size() == 1);
  CHECK(res.removed[0].rater_id == "r3");
}

TEST_CASE("removing every rater raises AllRatersRemoved") {
  Rng rng(29);
  std::vector<std::vector<int>> rows;
  for (int v = 0; v < 30; ++v) {
    rows.push_back({static_cast<int>(rng.uniform_index(5)),
                    static_cast<int>(rng.uniform_index(5))});
  }
  const auto ds = table_dataset(rows);
  CHECK_THROWS_AS(filter_raters(ds), Error);
}

TEST_CASE("inter-rater agreement endpoints") {
  Rng rng(8);
  std::vector<std::vector<int>> rows;
  for (int v = 0; v < 12; ++v) {
    const int level = static_cast<int>(rng.uniform_index(5));
    rows.push_back({level, level, 4 - level});
  }
  auto ds = table_dataset(rows);

  ds.raters = {"r1", "r2"};
  for (auto& video : ds.videos) {
    video.ratings[SocialSkill::Confidence].pop_back();
  }
  CHECK(inter_rater_agreement(ds).at(SocialSkill::Confidence) ==
        doctest::Approx(1.0));

  // Anti-correlated pair: r2' = 4 - r1.
  auto ds2 = table_dataset(rows);
  ds2.raters = {"r1", "r3"};
  for (auto& video : ds2.videos) {
    auto& entries = video.ratings[SocialSkill::Confidence];
    entries.erase(entries.begin() + 1);
  }
  CHECK(inter_rater_agreement(ds2).at(SocialSkill::Confidence) ==
        doctest::Approx(-1.0));
}

TEST_CASE("agreement with too little overlap raises") {
  auto ds = table_dataset({{2, INT_MIN}, {INT_MIN, 3}});
  CHECK_THROWS_AS(inter_rater_agreement(ds), Error);
}

TEST_CASE("bootstrap variance: zeros under perfect agreement, decreasing under noise") {
  std::vector<std::vector<int>> rows;
  Rng rng(31);
  for (int v = 0; v < 15; ++v) {
    const int level = static_cast<int>(rng.uniform_index(5));
    rows.push_back(std::vector<int>(6, level));
  }
  const auto noiseless = table_dataset(rows);
  const auto curve0 = bootstrap_rater_variance(noiseless, 5, 200, 1);
  for (double v : curve0) CHECK(v == 0.0);

  std::vector<std::vector<int>> noisy_rows;
  for (int v = 0; v < 15; ++v) {
    std::vector<int> row;
    const int level = 1 + static_cast<int>(rng.uniform_index(3));
    for (int r = 0; r < 6; ++r) {
      row.push_back(std::clamp(
          level + static_cast<int>(rng.uniform_index(3)) - 1, 0, 4));
    }
    noisy_rows.push_back(row);
  }
  const auto noisy = table_dataset(noisy_rows);
  const auto curve = bootstrap_rater_variance(noisy, 5, 200, 1);
  CHECK(curve[0] >= curve[4]);
  CHECK(curve[0] > 0.0);

  const auto rerun = bootstrap_rater_variance(noisy, 5, 200, 1);
  CHECK(curve == rerun);

  // With B large, the n = 1 entry approaches the mean per-cell population
  // variance of the observed scores.
  const auto big = bootstrap_rater_variance(noisy, 1, 5000, 2);
  double expected = 0.0;
  for (const auto& row : noisy_rows) {
    std::vector<double> vals(row.begin(), row.end());
    const double sd = stats::population_sd(vals);
    expected += sd * sd;
  }
  expected /= noisy_rows.size();
  CHECK(big[0] == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("bootstrap requires enough raters") {
  const auto ds = table_dataset({{2, 3}});
  CHECK_THROWS_AS(bootstrap_rater_variance(ds, 5, 50, 1), Error);
}

TEST_CASE("inter-parameter correlation matrix") {
  ConsensusRatings cr;
  Rng rng(12);
  for (int c = 0; c < 1000; ++c) {
    const std::string cid = "c" + std::to_string(c);
    const double pe = rng.uniform(0.0, 4.0);
    const double calm = rng.uniform(0.0, 4.0);
    cr.per_candidate[{cid, SocialSkill::PositiveEmotion}] = pe;
    cr.per_candidate[{cid, SocialSkill::Calmness}] = calm;
    cr.per_candidate[{cid, SocialSkill::Confidence}] = rng.uniform(0.0, 4.0);
    cr.per_candidate[{cid, SocialSkill::Engagement}] = pe;  // duplicate of PE
  }
  const auto res = inter_parameter_correlations(cr);

  // Symmetric, unit diagonal, entries in range.
  for (int a = 0; a < 4; ++a) {
    CHECK(res.matrix(a, a) == 1.0);
    for (int b = 0; b < 4; ++b) {
      CHECK(res.matrix(a, b) == res.matrix(b, a));
      CHECK(std::fabs(res.matrix(a, b)) <= 1.0 + 1e-12);
    }
  }
  // Duplicated skill correlates perfectly; independent ones stay near zero.
  CHECK(res.matrix(0, 3) == doctest::Approx(1.0));
  CHECK(std::fabs(res.matrix(0, 1)) < 0.1);
  CHECK(std::fabs(res.matrix(1, 2)) < 0.1);
  CHECK_FALSE(res.drop_calmness);
}

TEST_CASE("calmness drop flag fires above the threshold") {
  ConsensusRatings cr;
  Rng rng(13);
  for (int c = 0; c < 200; ++c) {
    const std::string cid = "c" + std::to_string(c);
    const double conf = rng.uniform(0.0, 4.0);
    cr.per_candidate[{cid, SocialSkill::PositiveEmotion}] = rng.uniform(0.0, 4.0);
    cr.per_candidate[{cid, SocialSkill::Calmness}] = conf + rng.normal(0.0, 0.1);
    cr.per_candidate[{cid, SocialSkill::Confidence}] = conf;
    cr.per_candidate[{cid, SocialSkill::Engagement}] = rng.uniform(0.0, 4.0);
  }
  const auto res = inter_parameter_correlations(cr);
  CHECK(res.matrix(1, 2) > 0.85);
  CHECK(res.drop_calmness);
}
