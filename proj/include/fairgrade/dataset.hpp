#pragma once

#include <string>

#include "fairgrade/types.hpp"

namespace fairgrade {

struct IngestionConfig {
  /// Expected prosody dimension; 0 means "infer from the first record".
  int expected_prosody_dim = 0;
  /// Non-excluded videos required per candidate.
  int min_videos_per_candidate = 1;
  double au_min = 0.0;
  double au_max = 5.0;
};

struct LoadResult {
  Dataset dataset;
  /// Number of AU samples clamped into [au_min, au_max] during ingestion.
  std::size_t clamp_warnings = 0;
};

/// Reads a videos.jsonl file, validating every record. Hard violations throw
/// (MalformedRecord with the 1-based line number, DimensionMismatch,
/// EmptyDataset); out-of-range AU values clamp and count as warnings.
LoadResult load_dataset(const std::string& path, const IngestionConfig& cfg = {});

/// Writes a dataset back to videos.jsonl; load(save(ds)) round-trips exactly.
void save_dataset(const Dataset& ds, const std::string& path);

struct ExclusionConfig {
  /// A video is excluded when more than this many raters flagged it
  /// ("not clear" or "cannot say") on any single skill.
  int max_special_raters = 2;
};

/// Pure filter: returns a copy with exclusion flags applied. Idempotent.
Dataset apply_exclusions(const Dataset& ds, const ExclusionConfig& cfg = {});

}  // namespace fairgrade
