#include "fairgrade/audit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fairgrade/regress.hpp"
#include "fairgrade/rng.hpp"

namespace fairgrade {

const char* group_axis_name(GroupAxis axis) {
  return axis == GroupAxis::Gender ? "gender" : "race";
}

std::string group_label(const GroupTags& tags, GroupAxis axis) {
  return axis == GroupAxis::Gender ? gender_name(tags.gender)
                                   : race_name(tags.race);
}

bool group_privileged(const std::string& label, GroupAxis axis) {
  return axis == GroupAxis::Gender ? label == gender_name(Gender::Male)
                                   : label == race_name(Race::Caucasian);
}

namespace {

std::vector<std::string> axis_labels(GroupAxis axis) {
  std::vector<std::string> labels;
  if (axis == GroupAxis::Gender) {
    for (Gender g : kAllGenders) labels.push_back(gender_name(g));
  } else {
    for (Race r : kAllRaces) labels.push_back(race_name(r));
  }
  return labels;
}

void check_aligned(std::span<const double> actual,
                   std::span<const double> predicted,
                   const std::vector<GroupTags>& tags) {
  require(actual.size() == predicted.size() && actual.size() == tags.size(),
          Cond::LengthMismatch, "actual/predicted/tags sizes differ: ",
          actual.size(), "/", predicted.size(), "/", tags.size());
  require(!actual.empty(), Cond::LengthMismatch, "empty inputs");
}

}  // namespace

std::vector<GroupErrorRow> group_errors(std::span<const double> actual,
                                        std::span<const double> predicted,
                                        const std::vector<GroupTags>& tags,
                                        GroupAxis axis) {
  check_aligned(actual, predicted, tags);
  std::vector<GroupErrorRow> rows;
  for (const auto& label : axis_labels(axis)) {
    GroupErrorRow row;
    row.group = label;
    for (std::size_t i = 0; i < actual.size(); ++i) {
      if (group_label(tags[i], axis) != label) continue;
      const double err = actual[i] - predicted[i];
      row.mean_diff += err;
      row.mae += std::fabs(err);
      ++row.n;
    }
    if (row.n == 0) continue;
    row.mean_diff /= static_cast<double>(row.n);
    row.mae /= static_cast<double>(row.n);
    rows.push_back(std::move(row));
  }
  return rows;
}

EffectSizeRow effect_sizes(std::span<const double> actual,
                           std::span<const double> predicted,
                           const std::vector<GroupTags>& tags, GroupAxis axis,
                           double alpha) {
  const auto rows = group_errors(actual, predicted, tags, axis);
  require(rows.size() >= 2, Cond::InvalidConfig,
          "need at least two groups on the axis");
  const double sd = stats::population_sd(predicted);
  require(sd > 0.0, Cond::DegeneratePredictions,
          "predicted scores are constant");

  const auto errors_of = [&](const std::string& label, bool absolute) {
    std::vector<double> out;
    for (std::size_t i = 0; i < actual.size(); ++i) {
      if (group_label(tags[i], axis) == label) {
        const double e = actual[i] - predicted[i];
        out.push_back(absolute ? std::fabs(e) : e);
      }
    }
    return out;
  };

  EffectSizeRow out;
  out.axis = axis;

  const auto [lo_md, hi_md] = std::minmax_element(
      rows.begin(), rows.end(),
      [](const auto& a, const auto& b) { return a.mean_diff < b.mean_diff; });
  out.diff_mean_diff = hi_md->mean_diff - lo_md->mean_diff;
  out.effect_mean_diff_pct = 100.0 * out.diff_mean_diff / sd;
  out.small_mean_diff = out.effect_mean_diff_pct < 20.0;
  out.mean_diff_test = stats::welch_t_test(errors_of(hi_md->group, false),
                                           errors_of(lo_md->group, false),
                                           alpha);
  out.mean_diff_groups = hi_md->group + " vs " + lo_md->group;

  const auto [lo_mae, hi_mae] = std::minmax_element(
      rows.begin(), rows.end(),
      [](const auto& a, const auto& b) { return a.mae < b.mae; });
  out.diff_mae = hi_mae->mae - lo_mae->mae;
  out.effect_mae_pct = 100.0 * out.diff_mae / sd;
  out.small_mae = out.effect_mae_pct < 20.0;
  out.mae_test = stats::welch_t_test(errors_of(hi_mae->group, true),
                                     errors_of(lo_mae->group, true), alpha);
  out.mae_groups = hi_mae->group + " vs " + lo_mae->group;
  return out;
}

SelectionMetrics cut_score_selection(std::span<const double> actual,
                                     std::span<const double> predicted,
                                     const std::vector<GroupTags>& tags,
                                     GroupAxis axis, double cut_fraction) {
  check_aligned(actual, predicted, tags);
  require(cut_fraction > 0.0 && cut_fraction < 1.0, Cond::InvalidConfig,
          "cut_fraction must be in (0, 1)");

  SelectionMetrics out;
  out.axis = axis;
  out.cut_fraction = cut_fraction;
  out.threshold_pred = stats::quantile_lower(
      std::vector<double>(predicted.begin(), predicted.end()), cut_fraction);
  out.threshold_actual = stats::quantile_lower(
      std::vector<double>(actual.begin(), actual.end()), cut_fraction);

  std::vector<bool> sel_pred(actual.size()), sel_actual(actual.size());
  for (std::size_t i = 0; i < actual.size(); ++i) {
    sel_pred[i] = predicted[i] >= out.threshold_pred;
    sel_actual[i] = actual[i] >= out.threshold_actual;
  }

  struct Counts {
    std::size_t n = 0, pred = 0, act = 0, tp = 0, fp = 0, agree = 0;
  };
  std::map<std::string, Counts> counts;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    auto& c = counts[group_label(tags[i], axis)];
    ++c.n;
    if (sel_pred[i]) ++c.pred;
    if (sel_actual[i]) ++c.act;
    if (sel_pred[i] && sel_actual[i]) ++c.tp;
    if (sel_pred[i] && !sel_actual[i]) ++c.fp;
    if (sel_pred[i] == sel_actual[i]) ++c.agree;
  }

  const std::string privileged_label =
      axis == GroupAxis::Gender ? gender_name(Gender::Male)
                                : race_name(Race::Caucasian);
  const auto priv_it = counts.find(privileged_label);
  require(priv_it != counts.end(), Cond::EmptyPrivilegedGroup,
          "no members of ", privileged_label);
  const double priv_rate_pred =
      static_cast<double>(priv_it->second.pred) / priv_it->second.n;
  const double priv_rate_actual =
      static_cast<double>(priv_it->second.act) / priv_it->second.n;

  for (const auto& label : axis_labels(axis)) {
    const auto it = counts.find(label);
    if (it == counts.end()) continue;
    const Counts& c = it->second;
    GroupSelectionRow row;
    row.group = label;
    row.n = c.n;
    row.selection_rate_pred = static_cast<double>(c.pred) / c.n;
    row.selection_rate_actual = static_cast<double>(c.act) / c.n;
    const std::size_t negatives = c.n - c.act;
    row.tpr = c.act > 0 ? static_cast<double>(c.tp) / c.act
                        : std::numeric_limits<double>::quiet_NaN();
    row.fpr = negatives > 0 ? static_cast<double>(c.fp) / negatives
                            : std::numeric_limits<double>::quiet_NaN();
    row.accuracy = static_cast<double>(c.agree) / c.n;
    if (!group_privileged(label, axis)) {
      if (priv_rate_actual > 0.0) {
        row.di_actual_pct = 100.0 * row.selection_rate_actual / priv_rate_actual;
      }
      if (priv_rate_pred > 0.0) {
        row.di_pred_pct = 100.0 * row.selection_rate_pred / priv_rate_pred;
      }
      auto outside = [](const std::optional<double>& di) {
        return !di.has_value() || *di < 80.0 || *di > 120.0;
      };
      row.di_flag = outside(row.di_actual_pct) || outside(row.di_pred_pct);
      out.any_di_flag = out.any_di_flag || row.di_flag;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<ImportanceRow> permutation_importance_fn(
    const ShuffledPredictor& predict_shuffled,
    const Eigen::VectorXd& baseline_predictions, std::span<const double> actual,
    const std::vector<std::string>& blocks, int repeats, std::uint64_t seed) {
  require(baseline_predictions.size() ==
              static_cast<Eigen::Index>(actual.size()),
          Cond::LengthMismatch, "predictions/actual size mismatch");
  require(repeats >= 1, Cond::InvalidConfig, "repeats must be >= 1");

  const double baseline = stats::pearson(
      std::span<const double>(baseline_predictions.data(),
                              baseline_predictions.size()),
      actual);

  std::vector<ImportanceRow> rows;
  const int n = static_cast<int>(actual.size());
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    ImportanceRow row;
    row.block = blocks[bi];
    row.baseline_r = baseline;
    double sum_r = 0.0;
    for (int rep = 0; rep < repeats; ++rep) {
      // seed + block index + repetition index keeps shuffles
      // schedule-independent.
      Rng rng(derive_seed(seed, bi, static_cast<std::uint64_t>(rep)));
      std::vector<int> row_map(n);
      std::iota(row_map.begin(), row_map.end(), 0);
      rng.shuffle(row_map);
      const Eigen::VectorXd pred = predict_shuffled(blocks[bi], row_map);
      sum_r += stats::pearson(
          std::span<const double>(pred.data(), pred.size()), actual);
    }
    row.shuffled_r_mean = sum_r / repeats;
    row.importance = row.baseline_r - row.shuffled_r_mean;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ImportanceRow> permutation_importance(
    const MatrixPredictor& predict, const Eigen::MatrixXd& x_test,
    std::span<const double> actual,
    const std::vector<std::pair<std::string, std::vector<int>>>& blocks,
    int repeats, std::uint64_t seed) {
  std::vector<std::string> names;
  for (const auto& [name, _] : blocks) names.push_back(name);

  const ShuffledPredictor shuffled = [&](const std::string& block,
                                         const std::vector<int>& row_map) {
    Eigen::MatrixXd x = x_test;
    for (const auto& [name, cols] : blocks) {
      if (name != block) continue;
      for (int col : cols) {
        for (int r = 0; r < x.rows(); ++r) {
          x(r, col) = x_test(row_map[r], col);
        }
      }
    }
    return predict(x);
  };
  return permutation_importance_fn(shuffled, predict(x_test), actual, names,
                                   repeats, seed);
}

ValidationReport validation_stats(const std::vector<SocialSkill>& skills,
                                  const Eigen::MatrixXd& scores,
                                  const std::vector<int>& outcome,
                                  int outcome_levels, double alpha) {
  require(scores.rows() == static_cast<Eigen::Index>(outcome.size()),
          Cond::LengthMismatch, "scores/outcome size mismatch");
  require(scores.cols() == static_cast<Eigen::Index>(skills.size()),
          Cond::LengthMismatch, "scores/skills size mismatch");
  require(outcome.size() >= 10, Cond::InvalidConfig,
          "validation needs at least 10 candidates");
  require(outcome_levels == 2 || outcome_levels == 3, Cond::InvalidConfig,
          "outcome must be binary or 3-level");

  std::vector<double> coded(outcome.size());
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    require(outcome[i] >= 0 && outcome[i] < outcome_levels,
            Cond::InvalidConfig, "outcome level out of range: ", outcome[i]);
    coded[i] = outcome_levels == 2 ? outcome[i] : 0.5 * outcome[i];
  }
  require(stats::population_sd(coded) > 0.0, Cond::ConstantOutcome,
          "all outcomes are identical");

  ValidationReport report;
  report.n = outcome.size();
  for (std::size_t s = 0; s < skills.size(); ++s) {
    ValidationSkillRow row;
    row.skill = skills[s];
    const Eigen::VectorXd col = scores.col(s);
    row.r = stats::pearson(std::span<const double>(col.data(), col.size()),
                           coded);
    row.p = stats::pearson_p_value(row.r, outcome.size());
    row.significant = row.p < alpha;
    report.skills.push_back(row);
  }

  const Eigen::VectorXd y =
      Eigen::Map<const Eigen::VectorXd>(coded.data(), coded.size());
  const LinearModel fit = ridge_fit(scores, y, 0.0);
  const Eigen::VectorXd fitted = fit.predict(scores);
  report.regression_r = stats::pearson(
      std::span<const double>(fitted.data(), fitted.size()), coded);
  return report;
}

}  // namespace fairgrade
