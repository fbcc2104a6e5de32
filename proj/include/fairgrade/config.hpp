#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairgrade/attention.hpp"
#include "fairgrade/dataset.hpp"
#include "fairgrade/regress.hpp"
#include "fairgrade/synth.hpp"

namespace fairgrade {

struct PathsConfig {
  std::string dataset = "videos.jsonl";   // relative paths resolve to out_dir
  std::string indicators;                  // empty = out_dir/indicators.json
  std::string out_dir = "out";
  std::string outcomes = "outcomes.csv";
  std::string predictions = "predictions.csv";
};

struct RaterFilterConfig {
  double r_min = 0.5;
  double diff_max = 1.0;
  int min_shared = 3;
  int rounds = 1;  // discrete filtering passes
};

struct RatingsConfig {
  double calmness_threshold = 0.85;
  int bootstrap_max_raters = 5;
  int bootstrap_B = 200;
};

struct AuditOptions {
  double cut_fraction = 1.0 / 3.0;
  double alpha = 0.05;
  int importance_repeats = 10;
};

struct ValidateOptions {
  int outcome_levels = 2;
  std::string source = "consensus";  // or "predictions"
};

struct RunConfig {
  PathsConfig paths;
  std::uint64_t seed = 7;
  std::vector<SocialSkill> skills = {SocialSkill::PositiveEmotion,
                                     SocialSkill::Confidence,
                                     SocialSkill::Engagement};
  SynthConfig synth;
  ExclusionConfig exclusion;
  RaterFilterConfig rater_filter;
  RatingsConfig ratings;
  ExpertPipelineConfig expert;
  double eval_split = 0.7;
  int eval_bootstraps = 20;
  int eval_min_stratum = 10;
  attn::ModelConfig attention;
  attn::TrainConfig attn_train;
  double attn_val_fraction = 0.2;
  AuditOptions audit;
  ValidateOptions validate;

  /// Path resolution: absolute paths pass through, relative paths live in
  /// out_dir.
  std::string resolve(const std::string& path) const;
  std::string indicators_path() const;
};

/// Paper-stated values wherever one exists, desk-scale synthetic defaults
/// otherwise.
RunConfig default_run_config();

/// Defaults deep-merged with the JSON file at `path`; unknown keys are
/// rejected (ConfigInvalid).
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

/// Sets one field by dotted path ("eval.bootstraps", "synth.candidates");
/// the value is parsed as JSON (so strings need quotes, numbers do not).
void override_run_config(RunConfig& cfg, const std::string& dotted_key,
                         const std::string& json_value);

/// The full config tree with its defaults, for --help output.
std::string describe_run_config();

}  // namespace fairgrade
