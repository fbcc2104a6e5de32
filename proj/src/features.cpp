#include "fairgrade/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "fairgrade/io.hpp"
#include "fairgrade/stats.hpp"

namespace fairgrade {

using nlohmann::json;

const std::array<std::string, kNumAggregateFeatures>& aggregate_feature_names() {
  static const std::array<std::string, kNumAggregateFeatures> names = {
      "num_intensity_rise",     "num_intensity_drop",
      "mean_max_intensities",   "mean_min_intensities",
      "average_singular_change", "longest_pos_run",
      "longest_neg_run",        "stdev",
      "max_intensity_5",        "num_maximas",
      "num_minimas"};
  return names;
}

ExtremaProfile find_extrema(std::span<const double> series) {
  require(series.size() >= 3, Cond::SeriesTooShort,
          "need at least 3 samples, got ", series.size());

  struct Point {
    std::size_t index;
    double value;
    bool is_max;
  };
  std::vector<Point> merged;
  for (std::size_t t = 1; t + 1 < series.size(); ++t) {
    // Plateaus count once, at their first index.
    if (series[t - 1] < series[t] && series[t] >= series[t + 1]) {
      merged.push_back({t, series[t], true});
    } else if (series[t - 1] > series[t] && series[t] <= series[t + 1]) {
      merged.push_back({t, series[t], false});
    }
  }

  // Enforce alternation: of two same-kind neighbours keep the more extreme
  // (ties keep the earlier one).
  std::vector<Point> repaired;
  for (const auto& p : merged) {
    if (!repaired.empty() && repaired.back().is_max == p.is_max) {
      const bool stronger = p.is_max ? p.value > repaired.back().value
                                     : p.value < repaired.back().value;
      if (stronger) repaired.back() = p;
      continue;
    }
    repaired.push_back(p);
  }

  ExtremaProfile out;
  for (const auto& p : repaired) {
    (p.is_max ? out.maxima : out.minima).push_back({p.index, p.value});
  }
  return out;
}

AggregateFeatureVector aggregate_features(std::span<const double> series,
                                          double fps,
                                          const FeatureConfig& cfg) {
  require(series.size() >= 3, Cond::SeriesTooShort,
          "need at least 3 samples, got ", series.size());
  require(fps > 0.0, Cond::InvalidConfig, "fps must be positive");
  require(cfg.theta_rise >= 0.0 && cfg.theta_drop >= 0.0, Cond::InvalidConfig,
          "thresholds must be non-negative");

  const std::size_t n = series.size();
  const double duration = static_cast<double>(n) / fps;
  const auto profile = find_extrema(series);

  // Re-merge the alternating sequence by index for closest-pair amplitudes.
  struct Point {
    std::size_t index;
    double value;
    bool is_max;
  };
  std::vector<Point> seq;
  for (const auto& [i, v] : profile.maxima) seq.push_back({i, v, true});
  for (const auto& [i, v] : profile.minima) seq.push_back({i, v, false});
  std::sort(seq.begin(), seq.end(),
            [](const Point& a, const Point& b) { return a.index < b.index; });

  int rises = 0;
  int drops = 0;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    if (!seq[i].is_max && seq[i + 1].is_max) {
      if (seq[i + 1].value - seq[i].value > cfg.theta_rise) ++rises;
    } else if (seq[i].is_max && !seq[i + 1].is_max) {
      if (seq[i].value - seq[i + 1].value > cfg.theta_drop) ++drops;
    }
  }

  auto mean_of = [](const std::vector<std::pair<std::size_t, double>>& pts) {
    if (pts.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [_, v] : pts) s += v;
    return s / static_cast<double>(pts.size());
  };

  double change_sum = 0.0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const double d = series[t + 1] - series[t];
    change_sum += cfg.signed_change ? d : std::fabs(d);
  }
  const double avg_change = change_sum / static_cast<double>(n - 1);

  std::size_t longest_up = 0, longest_down = 0, up = 0, down = 0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    up = series[t + 1] > series[t] ? up + 1 : 0;
    down = series[t + 1] < series[t] ? down + 1 : 0;
    longest_up = std::max(longest_up, up);
    longest_down = std::max(longest_down, down);
  }

  double top5 = 0.0;
  if (!profile.maxima.empty()) {
    std::vector<double> values;
    values.reserve(profile.maxima.size());
    for (const auto& [_, v] : profile.maxima) values.push_back(v);
    std::sort(values.begin(), values.end(), std::greater<>());
    const std::size_t k = std::min<std::size_t>(5, values.size());
    for (std::size_t i = 0; i < k; ++i) top5 += values[i];
    top5 /= static_cast<double>(k);
  }

  AggregateFeatureVector out;
  out.values[0] = rises / duration;
  out.values[1] = drops / duration;
  out.values[2] = mean_of(profile.maxima);
  out.values[3] = mean_of(profile.minima);
  out.values[4] = avg_change;
  out.values[5] = (static_cast<double>(longest_up) / fps) / duration;
  out.values[6] = (static_cast<double>(longest_down) / fps) / duration;
  out.values[7] = stats::population_sd(series);
  out.values[8] = top5;
  out.values[9] = static_cast<double>(profile.maxima.size()) / duration;
  out.values[10] = static_cast<double>(profile.minima.size()) / duration;
  return out;
}

const std::set<int>& IndicatorSet::channels(SocialSkill skill,
                                            bool positive_polarity) const {
  const auto& side = positive_polarity ? positive : negative;
  static const std::set<int> empty;
  const auto it = side.find(skill);
  return it == side.end() ? empty : it->second;
}

void IndicatorSet::validate() const {
  for (const auto& [skill, pos] : positive) {
    const auto neg_it = negative.find(skill);
    if (neg_it == negative.end()) continue;
    for (int c : pos) {
      require(!neg_it->second.count(c), Cond::InvalidConfig, "channel ",
              channel_names()[c], " is both a positive and negative indicator for ",
              skill_name(skill));
    }
  }
}

IndicatorSet default_indicators() {
  IndicatorSet ind;
  auto add = [&ind](SocialSkill s, std::initializer_list<const char*> pos,
                    std::initializer_list<const char*> neg) {
    for (const char* name : pos) ind.positive[s].insert(channel_index(name));
    for (const char* name : neg) ind.negative[s].insert(channel_index(name));
  };
  add(SocialSkill::PositiveEmotion, {"AU06", "AU12", "AU25"}, {"AU04", "AU15"});
  add(SocialSkill::Confidence, {"AU10", "AU14", "AU23"}, {"AU05", "AU45"});
  add(SocialSkill::Engagement, {"AU01", "AU02", "AU26", "pose_ry"},
      {"AU07", "AU09"});
  return ind;
}

IndicatorSet load_indicators(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    raise(Cond::MalformedRecord, "indicators file ", path, ": ", e.what());
  }
  IndicatorSet ind;
  for (const auto& [skill_key, sets] : j.items()) {
    const SocialSkill skill = skill_from_name(skill_key);
    for (const bool positive : {true, false}) {
      const char* key = positive ? "positive" : "negative";
      if (!sets.contains(key)) continue;
      for (const auto& name : sets.at(key)) {
        const int c = channel_index(name.get<std::string>());
        (positive ? ind.positive : ind.negative)[skill].insert(c);
      }
    }
  }
  ind.validate();
  return ind;
}

void save_indicators(const IndicatorSet& ind, const std::string& path) {
  json j = json::object();
  auto emit = [&](const std::map<SocialSkill, std::set<int>>& side,
                  const char* key) {
    for (const auto& [skill, channels] : side) {
      json list = json::array();
      for (int c : channels) list.push_back(channel_names()[c]);
      j[skill_name(skill)][key] = std::move(list);
    }
  };
  emit(ind.positive, "positive");
  emit(ind.negative, "negative");
  io::atomic_write(path, j.dump(2) + "\n");
}

TransformerWeights transform_channel_features(const StackedFitInput& input,
                                              const IndicatorSet& indicators,
                                              SocialSkill skill,
                                              bool positive_polarity,
                                              double alpha) {
  const auto& channels = indicators.channels(skill, positive_polarity);
  require(!channels.empty(), Cond::EmptyIndicatorSet, "no ",
          positive_polarity ? "positive" : "negative", " indicators for ",
          skill_name(skill));
  require(input.video_features.size() == input.targets.size(),
          Cond::LengthMismatch, "features/targets size mismatch");
  require(!input.targets.empty(), Cond::LengthMismatch, "no training videos");

  const int n_channels = static_cast<int>(channels.size());
  const int n_rows = static_cast<int>(input.targets.size()) * n_channels;
  const int n_cols = kNumAggregateFeatures + n_channels;

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n_rows, n_cols);
  Eigen::VectorXd y(n_rows);
  int row = 0;
  for (std::size_t v = 0; v < input.targets.size(); ++v) {
    int one_hot = 0;
    for (int c : channels) {
      const auto it = input.video_features[v].find(c);
      require(it != input.video_features[v].end(), Cond::UnknownChannel,
              "missing aggregate features for channel ", channel_names()[c]);
      x.block(row, 0, 1, kNumAggregateFeatures) =
          it->second.as_vector().transpose();
      x(row, kNumAggregateFeatures + one_hot) = 1.0;
      y[row] = input.targets[v];
      ++row;
      ++one_hot;
    }
  }

  // Ridge on the shared feature weights only; constants stay unpenalized.
  const double alpha_eff = std::max(alpha, 1e-8);
  Eigen::MatrixXd normal = x.transpose() * x;
  for (int i = 0; i < kNumAggregateFeatures; ++i) normal(i, i) += alpha_eff;
  const Eigen::VectorXd beta = normal.ldlt().solve(x.transpose() * y);

  TransformerWeights tw;
  tw.skill = skill;
  tw.positive_polarity = positive_polarity;
  tw.alpha = alpha;
  tw.shared = beta.head(kNumAggregateFeatures);
  int one_hot = 0;
  for (int c : channels) {
    tw.channel_constant[c] = beta[kNumAggregateFeatures + one_hot];
    ++one_hot;
  }
  return tw;
}

double apply_transformer(const TransformerWeights& tw,
                         const AggregateFeatureVector& afv, int channel) {
  const auto it = tw.channel_constant.find(channel);
  require(it != tw.channel_constant.end(), Cond::UnknownChannel, "channel ",
          channel_names()[channel], " is not in this transformer");
  return tw.shared.dot(afv.as_vector()) + it->second;
}

}  // namespace fairgrade
