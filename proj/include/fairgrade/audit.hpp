#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairgrade/stats.hpp"
#include "fairgrade/types.hpp"

namespace fairgrade {

enum class GroupAxis { Gender, Race };
const char* group_axis_name(GroupAxis axis);

/// Group label along an axis ("Male", "Asian", ...).
std::string group_label(const GroupTags& tags, GroupAxis axis);
bool group_privileged(const std::string& label, GroupAxis axis);

struct GroupErrorRow {
  std::string group;
  double mean_diff = 0.0;  // mean(actual - predicted)
  double mae = 0.0;
  std::size_t n = 0;
};

/// Per-group signed and absolute errors; groups with no members are omitted.
std::vector<GroupErrorRow> group_errors(std::span<const double> actual,
                                        std::span<const double> predicted,
                                        const std::vector<GroupTags>& tags,
                                        GroupAxis axis);

struct EffectSizeRow {
  GroupAxis axis = GroupAxis::Gender;
  double diff_mean_diff = 0.0;  // max - min of group mean_diffs
  double diff_mae = 0.0;
  double effect_mean_diff_pct = 0.0;  // 100 * diff / sd(predicted)
  double effect_mae_pct = 0.0;
  bool small_mean_diff = true;  // effect below 20%
  bool small_mae = true;
  stats::TTestResult mean_diff_test;  // Welch, extreme groups, signed errors
  stats::TTestResult mae_test;        // Welch, extreme groups, absolute errors
  std::string mean_diff_groups;       // "hi vs lo" labels for the report
  std::string mae_groups;
};

EffectSizeRow effect_sizes(std::span<const double> actual,
                           std::span<const double> predicted,
                           const std::vector<GroupTags>& tags, GroupAxis axis,
                           double alpha = 0.05);

struct GroupSelectionRow {
  std::string group;
  std::size_t n = 0;
  double selection_rate_pred = 0.0;
  double selection_rate_actual = 0.0;
  double tpr = 0.0;       // selected_pred among selected_actual
  double fpr = 0.0;       // selected_pred among not selected_actual
  double accuracy = 0.0;  // agreement between the two selections
  /// Disparate impact vs the privileged group, percent; protected rows only.
  std::optional<double> di_actual_pct;
  std::optional<double> di_pred_pct;
  bool di_flag = false;  // any DI outside [80, 120]
};

struct SelectionMetrics {
  GroupAxis axis = GroupAxis::Gender;
  double cut_fraction = 1.0 / 3.0;
  double threshold_pred = 0.0;
  double threshold_actual = 0.0;
  std::vector<GroupSelectionRow> rows;
  bool any_di_flag = false;
};

/// Cut-score screening: select everyone at or above the cut_fraction
/// quantile (computed separately on predicted and actual scores), then
/// report per-group rates and disparate impact against the privileged group
/// (Male / Caucasian). Throws EmptyPrivilegedGroup.
SelectionMetrics cut_score_selection(std::span<const double> actual,
                                     std::span<const double> predicted,
                                     const std::vector<GroupTags>& tags,
                                     GroupAxis axis,
                                     double cut_fraction = 1.0 / 3.0);

struct ImportanceRow {
  std::string block;
  double baseline_r = 0.0;
  double shuffled_r_mean = 0.0;
  double importance = 0.0;  // baseline_r - shuffled_r_mean
};

/// Predictions with one block's rows remapped: row i takes the block values
/// of row row_map[i] (other blocks untouched).
using ShuffledPredictor = std::function<Eigen::VectorXd(
    const std::string& block, const std::vector<int>& row_map)>;

std::vector<ImportanceRow> permutation_importance_fn(
    const ShuffledPredictor& predict_shuffled,
    const Eigen::VectorXd& baseline_predictions, std::span<const double> actual,
    const std::vector<std::string>& blocks, int repeats, std::uint64_t seed);

/// Design-matrix convenience wrapper: blocks are named column sets.
using MatrixPredictor = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

std::vector<ImportanceRow> permutation_importance(
    const MatrixPredictor& predict, const Eigen::MatrixXd& x_test,
    std::span<const double> actual,
    const std::vector<std::pair<std::string, std::vector<int>>>& blocks,
    int repeats, std::uint64_t seed);

struct ValidationSkillRow {
  SocialSkill skill = SocialSkill::PositiveEmotion;
  double r = 0.0;
  double p = 1.0;
  bool significant = false;
};

struct ValidationReport {
  std::vector<ValidationSkillRow> skills;
  double regression_r = 0.0;
  std::size_t n = 0;
};

/// Correlation of each skill score with an interview outcome (binary 0/1 or
/// a 3-level scale coded 0 / 0.5 / 1), plus the multiple-regression fit of
/// the outcome on all skills together. Throws ConstantOutcome.
ValidationReport validation_stats(
    const std::vector<SocialSkill>& skills,
    const Eigen::MatrixXd& scores,  // candidates x skills
    const std::vector<int>& outcome, int outcome_levels, double alpha = 0.05);

}  // namespace fairgrade
