#include <doctest.h>

#include <cmath>

#include "fairgrade/features.hpp"
#include "fairgrade/rng.hpp"
#include "oracle_features.hpp"

using namespace fairgrade;

namespace {

/// Random series with a mix of smooth, jumpy and plateau-heavy shapes.
std::vector<double> random_series(Rng& rng, std::size_t length) {
  std::vector<double> v(length);
  const int style = static_cast<int>(rng.uniform_index(3));
  double x = rng.uniform(0.0, 3.0);
  for (auto& out : v) {
    switch (style) {
      case 0:  // random walk
        x += rng.normal(0.0, 0.4);
        out = x;
        break;
      case 1:  // independent draws
        out = rng.uniform(0.0, 5.0);
        break;
      default:  // quantized, produces plateaus and ties
        out = std::round(rng.uniform(0.0, 4.0));
        break;
    }
  }
  return v;
}

std::vector<double> distinct_series(Rng& rng, std::size_t length) {
  std::vector<double> v(length);
  for (auto& x : v) x = rng.uniform(0.0, 5.0);
  return v;
}

}  // namespace

TEST_CASE("extrema on hand-worked examples") {
  SUBCASE("[0,1,0] has one maximum") {
    const std::vector<double> v = {0, 1, 0};
    const auto p = find_extrema(v);
    REQUIRE(p.maxima.size() == 1);
    CHECK(p.maxima[0] == std::pair<std::size_t, double>{1, 1.0});
    CHECK(p.minima.empty());
  }
  SUBCASE("constant series has none") {
    const std::vector<double> v = {2, 2, 2, 2};
    const auto p = find_extrema(v);
    CHECK(p.maxima.empty());
    CHECK(p.minima.empty());
  }
  SUBCASE("plateau maxima count once at their first index") {
    const std::vector<double> v = {0, 2, 2, 0, 3, 0};
    const auto p = find_extrema(v);
    REQUIRE(p.maxima.size() == 2);
    CHECK(p.maxima[0] == std::pair<std::size_t, double>{1, 2.0});
    CHECK(p.maxima[1] == std::pair<std::size_t, double>{4, 3.0});
    REQUIRE(p.minima.size() == 1);
    CHECK(p.minima[0] == std::pair<std::size_t, double>{3, 0.0});
  }
  SUBCASE("mid-descent plateau leaves only the deeper minimum") {
    const std::vector<double> v = {3, 2, 2, 1, 3};
    const auto p = find_extrema(v);
    CHECK(p.maxima.empty());
    REQUIRE(p.minima.size() == 1);
    CHECK(p.minima[0] == std::pair<std::size_t, double>{3, 1.0});
  }
  SUBCASE("short series throws") {
    const std::vector<double> v = {1, 2};
    CHECK_THROWS_AS(find_extrema(v), Error);
  }
}

TEST_CASE("extrema alternate and avoid endpoints on random input") {
  Rng rng(404);
  for (int rep = 0; rep < 50; ++rep) {
    const auto v = random_series(rng, 3 + rng.uniform_index(200));
    const auto p = find_extrema(v);
    std::vector<std::pair<std::size_t, bool>> merged;
    for (const auto& [i, _] : p.maxima) merged.push_back({i, true});
    for (const auto& [i, _] : p.minima) merged.push_back({i, false});
    std::sort(merged.begin(), merged.end());
    for (std::size_t i = 0; i < merged.size(); ++i) {
      CHECK(merged[i].first > 0);
      CHECK(merged[i].first < v.size() - 1);
      if (i > 0) CHECK(merged[i].second != merged[i - 1].second);
    }
  }
}

TEST_CASE("aggregate features: degenerate shapes") {
  const double fps = 15.0;
  SUBCASE("constant series is all zeros") {
    const std::vector<double> v(40, 1.25);
    const auto f = aggregate_features(v, fps);
    for (double x : f.values) CHECK(x == 0.0);
  }
  SUBCASE("strictly increasing series") {
    std::vector<double> v;
    for (int i = 0; i < 30; ++i) v.push_back(0.1 * i);
    const auto f = aggregate_features(v, fps);
    const double duration = 30.0 / fps;
    CHECK(f[5] == doctest::Approx((29.0 / fps) / duration));  // longest_pos_run
    CHECK(f[6] == 0.0);
    CHECK(f[9] == 0.0);   // no maxima
    CHECK(f[0] == 0.0);   // no rises between extrema pairs
  }
}

TEST_CASE("aggregate features match the brute-force oracle") {
  Rng rng(2718);
  FeatureConfig cfg;
  for (int rep = 0; rep < 120; ++rep) {
    const std::size_t len = 3 + rng.uniform_index(400);
    const auto v = random_series(rng, len);
    const double fps = rep % 2 == 0 ? 15.0 : 7.5;
    const auto got = aggregate_features(v, fps, cfg);
    const auto want = oracle::all_features(v, fps, cfg.theta_rise, cfg.theta_drop);
    for (int i = 0; i < kNumAggregateFeatures; ++i) {
      INFO("feature ", aggregate_feature_names()[i], " rep ", rep);
      if (i == 0 || i == 1 || i == 9 || i == 10) {
        CHECK(got[i] == want[i]);  // integer counts over the same duration
      } else {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("time reversal swaps directional features") {
  Rng rng(99);
  for (int rep = 0; rep < 40; ++rep) {
    const auto v = distinct_series(rng, 5 + rng.uniform_index(150));
    std::vector<double> r(v.rbegin(), v.rend());
    const auto f = aggregate_features(v, 15.0);
    const auto g = aggregate_features(r, 15.0);
    CHECK(f[7] == doctest::Approx(g[7]).epsilon(1e-12));   // stdev
    CHECK(f[4] == doctest::Approx(g[4]).epsilon(1e-12));   // avg change
    CHECK(f[9] + f[10] == doctest::Approx(g[9] + g[10]));  // extrema total
    CHECK(f[5] == doctest::Approx(g[6]).epsilon(1e-12));   // pos run <-> neg run
    CHECK(f[6] == doctest::Approx(g[5]).epsilon(1e-12));
    CHECK(f[0] == doctest::Approx(g[1]));                  // rise <-> drop
    CHECK(f[1] == doctest::Approx(g[0]));
  }
}

TEST_CASE("positive scaling behaves predictably") {
  Rng rng(123);
  const auto v = distinct_series(rng, 80);
  const double lambda = 2.75;
  std::vector<double> scaled;
  for (double x : v) scaled.push_back(lambda * x);

  FeatureConfig cfg;
  const auto f = aggregate_features(v, 15.0, cfg);
  FeatureConfig scaled_cfg;
  scaled_cfg.theta_rise = cfg.theta_rise * lambda;
  scaled_cfg.theta_drop = cfg.theta_drop * lambda;
  const auto g = aggregate_features(scaled, 15.0, scaled_cfg);

  for (int i : {2, 3, 4, 7, 8}) {
    CHECK(g[i] == doctest::Approx(lambda * f[i]).epsilon(1e-12));
  }
  for (int i : {0, 1, 5, 6, 9, 10}) {
    CHECK(g[i] == doctest::Approx(f[i]).epsilon(1e-12));
  }
}

TEST_CASE("signed change option averages raw steps") {
  const std::vector<double> v = {0, 1, 0, 1, 0};
  FeatureConfig cfg;
  cfg.signed_change = true;
  CHECK(aggregate_features(v, 15.0, cfg)[4] == doctest::Approx(0.0));
  cfg.signed_change = false;
  CHECK(aggregate_features(v, 15.0, cfg)[4] == doctest::Approx(1.0));
}

// --- stacked transformer -----------------------------------------------------

namespace {

StackedFitInput random_fit_input(Rng& rng, const std::set<int>& channels,
                                 int n_videos) {
  StackedFitInput input;
  for (int v = 0; v < n_videos; ++v) {
    std::map<int, AggregateFeatureVector> per_channel;
    for (int c : channels) {
      AggregateFeatureVector afv;
      for (auto& x : afv.values) x = rng.normal(0.0, 1.0);
      per_channel[c] = afv;
    }
    input.video_features.push_back(std::move(per_channel));
    input.targets.push_back(rng.uniform(0.0, 4.0));
  }
  return input;
}

IndicatorSet one_sided(SocialSkill skill, const std::set<int>& channels) {
  IndicatorSet ind;
  ind.positive[skill] = channels;
  return ind;
}

}  // namespace

TEST_CASE("constant target with huge penalty collapses onto the constants") {
  Rng rng(55);
  const std::set<int> channels = {0, 3, 7};
  auto input = random_fit_input(rng, channels, 12);
  for (auto& t : input.targets) t = 2.5;

  const auto ind = one_sided(SocialSkill::Confidence, channels);
  const auto tw = transform_channel_features(input, ind,
                                             SocialSkill::Confidence, true,
                                             1e9);
  for (int i = 0; i < kNumAggregateFeatures; ++i) {
    CHECK(tw.shared[i] == doctest::Approx(0.0).epsilon(1e-6));
  }
  for (const auto& [c, constant] : tw.channel_constant) {
    CHECK(constant == doctest::Approx(2.5).epsilon(1e-6));
  }
  for (const auto& fv : input.video_features) {
    CHECK(apply_transformer(tw, fv.at(3), 3) ==
          doctest::Approx(2.5).epsilon(1e-6));
  }
}

TEST_CASE("single channel reduces to ridge with an unpenalized intercept") {
  Rng rng(56);
  const std::set<int> channels = {4};
  const auto input = random_fit_input(rng, channels, 25);
  const double alpha = 3.0;
  const auto ind = one_sided(SocialSkill::PositiveEmotion, channels);
  const auto tw = transform_channel_features(
      input, ind, SocialSkill::PositiveEmotion, true, alpha);

  // Closed-form reference: X = [features | 1], penalty on features only.
  const int n = static_cast<int>(input.targets.size());
  Eigen::MatrixXd x(n, kNumAggregateFeatures + 1);
  Eigen::VectorXd y(n);
  for (int v = 0; v < n; ++v) {
    x.block(v, 0, 1, kNumAggregateFeatures) =
        input.video_features[v].at(4).as_vector().transpose();
    x(v, kNumAggregateFeatures) = 1.0;
    y[v] = input.targets[v];
  }
  Eigen::MatrixXd penalty =
      Eigen::MatrixXd::Identity(x.cols(), x.cols()) * std::max(alpha, 1e-8);
  penalty(kNumAggregateFeatures, kNumAggregateFeatures) = 0.0;
  const Eigen::VectorXd beta =
      (x.transpose() * x + penalty).fullPivLu().solve(x.transpose() * y);

  for (int i = 0; i < kNumAggregateFeatures; ++i) {
    CHECK(tw.shared[i] == doctest::Approx(beta[i]).epsilon(1e-8));
  }
  CHECK(tw.channel_constant.at(4) ==
        doctest::Approx(beta[kNumAggregateFeatures]).epsilon(1e-8));
}

TEST_CASE("duplicated channel with doubled alpha matches the single fit") {
  Rng rng(57);
  const std::set<int> single = {2};
  auto input = random_fit_input(rng, single, 18);
  const auto tw1 = transform_channel_features(
      input, one_sided(SocialSkill::Engagement, single),
      SocialSkill::Engagement, true, 5.0);

  // Same rows presented under two channel ids, targets repeated.
  StackedFitInput doubled;
  for (std::size_t v = 0; v < input.targets.size(); ++v) {
    std::map<int, AggregateFeatureVector> fv;
    fv[2] = input.video_features[v].at(2);
    fv[9] = input.video_features[v].at(2);
    doubled.video_features.push_back(std::move(fv));
    doubled.targets.push_back(input.targets[v]);
  }
  const auto tw2 = transform_channel_features(
      doubled, one_sided(SocialSkill::Engagement, {2, 9}),
      SocialSkill::Engagement, true, 10.0);

  for (int i = 0; i < kNumAggregateFeatures; ++i) {
    CHECK(tw2.shared[i] == doctest::Approx(tw1.shared[i]).epsilon(1e-8));
  }
  CHECK(tw2.channel_constant.at(2) ==
        doctest::Approx(tw2.channel_constant.at(9)).epsilon(1e-8));
  CHECK(tw2.channel_constant.at(2) ==
        doctest::Approx(tw1.channel_constant.at(2)).epsilon(1e-8));
}

TEST_CASE("training error never exceeds the best constant predictor") {
  Rng rng(58);
  const std::set<int> channels = {1, 5, 12};
  const auto input = random_fit_input(rng, channels, 30);
  const auto ind = one_sided(SocialSkill::Confidence, channels);
  const auto tw = transform_channel_features(input, ind,
                                             SocialSkill::Confidence, true,
                                             2.0);

  double mean_target = 0.0;
  for (double t : input.targets) mean_target += t;
  mean_target /= input.targets.size();

  double fit_err = 0.0, const_err = 0.0;
  for (std::size_t v = 0; v < input.targets.size(); ++v) {
    for (int c : channels) {
      const double pred =
          apply_transformer(tw, input.video_features[v].at(c), c);
      fit_err += std::pow(input.targets[v] - pred, 2);
      const_err += std::pow(input.targets[v] - mean_target, 2);
    }
  }
  CHECK(fit_err <= const_err + 1e-9);
}

TEST_CASE("stacking order does not change the solution") {
  Rng rng(59);
  const std::set<int> channels = {3, 8, 14, 20};
  const auto input = random_fit_input(rng, channels, 15);
  const auto ind = one_sided(SocialSkill::Confidence, channels);
  const auto tw = transform_channel_features(input, ind,
                                             SocialSkill::Confidence, true,
                                             1.5);

  // Reverse video order; the normal equations are permutation invariant.
  StackedFitInput reversed;
  reversed.video_features.assign(input.video_features.rbegin(),
                                 input.video_features.rend());
  reversed.targets.assign(input.targets.rbegin(), input.targets.rend());
  const auto tw2 = transform_channel_features(reversed, ind,
                                              SocialSkill::Confidence, true,
                                              1.5);
  for (int i = 0; i < kNumAggregateFeatures; ++i) {
    CHECK(tw.shared[i] == doctest::Approx(tw2.shared[i]).epsilon(1e-10));
  }
}

TEST_CASE("transformer edge errors") {
  Rng rng(60);
  const std::set<int> channels = {0};
  const auto input = random_fit_input(rng, channels, 5);
  IndicatorSet empty;
  CHECK_THROWS_AS(transform_channel_features(input, empty,
                                             SocialSkill::Confidence, true, 1.0),
                  Error);

  const auto tw = transform_channel_features(
      input, one_sided(SocialSkill::Confidence, channels),
      SocialSkill::Confidence, true, 1.0);
  AggregateFeatureVector afv;
  CHECK_THROWS_AS(apply_transformer(tw, afv, 13), Error);

  // Zero feature vector returns exactly the channel constant.
  CHECK(apply_transformer(tw, afv, 0) ==
        doctest::Approx(tw.channel_constant.at(0)).epsilon(1e-12));
}

TEST_CASE("indicator sets validate and round-trip through json") {
  auto ind = default_indicators();
  ind.validate();
  CHECK(ind.channels(SocialSkill::PositiveEmotion, true).size() == 3);
  CHECK(ind.channels(SocialSkill::PositiveEmotion, false).size() == 2);
  CHECK(ind.channels(SocialSkill::Calmness, true).empty());

  const std::string path = "/tmp/fairgrade_indicators_test.json";
  save_indicators(ind, path);
  const auto loaded = load_indicators(path);
  CHECK(loaded.positive == ind.positive);
  CHECK(loaded.negative == ind.negative);
  std::remove(path.c_str());

  IndicatorSet bad;
  bad.positive[SocialSkill::Confidence] = {1, 2};
  bad.negative[SocialSkill::Confidence] = {2, 3};
  CHECK_THROWS_AS(bad.validate(), Error);
}
