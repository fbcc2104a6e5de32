#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairgrade/error.hpp"

namespace fairgrade {

// ---------------------------------------------------------------------------
// Channels: 17 facial action-unit intensity series plus 6 head-pose series,
// in a fixed canonical order shared by files, feature tables and models.
// ---------------------------------------------------------------------------

inline constexpr int kNumActionUnits = 17;
inline constexpr int kNumHeadPose = 6;
inline constexpr int kNumChannels = kNumActionUnits + kNumHeadPose;

const std::array<std::string, kNumChannels>& channel_names();

/// Index of a channel name in canonical order; throws UnknownChannel.
int channel_index(const std::string& name);

inline bool is_action_unit(int channel) { return channel < kNumActionUnits; }

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class SocialSkill : std::uint8_t {
  PositiveEmotion = 0,
  Calmness = 1,
  Confidence = 2,
  Engagement = 3,
};
inline constexpr int kNumSkills = 4;
inline constexpr std::array<SocialSkill, kNumSkills> kAllSkills = {
    SocialSkill::PositiveEmotion, SocialSkill::Calmness,
    SocialSkill::Confidence, SocialSkill::Engagement};

const std::string& skill_name(SocialSkill s);
SocialSkill skill_from_name(const std::string& name);

enum class Gender : std::uint8_t { Male, Female };
enum class Race : std::uint8_t { Caucasian, AfricanAmerican, Asian, Indian, Others };
enum class Country : std::uint8_t { India, US, UK, OtherEurope };

const std::string& gender_name(Gender g);
const std::string& race_name(Race r);
const std::string& country_name(Country c);
Gender gender_from_name(const std::string& name);
Race race_from_name(const std::string& name);
Country country_from_name(const std::string& name);

inline constexpr std::array<Gender, 2> kAllGenders = {Gender::Male, Gender::Female};
inline constexpr std::array<Race, 5> kAllRaces = {
    Race::Caucasian, Race::AfricanAmerican, Race::Asian, Race::Indian, Race::Others};
inline constexpr std::array<Country, 4> kAllCountries = {
    Country::India, Country::US, Country::UK, Country::OtherEurope};

struct GroupTags {
  Gender gender = Gender::Male;
  Race race = Race::Caucasian;
  Country country = Country::India;

  /// Privileged = Male (gender axis) and Caucasian (race axis).
  bool privileged_gender() const { return gender == Gender::Male; }
  bool privileged_race() const { return race == Race::Caucasian; }

  bool operator==(const GroupTags&) const = default;
};

// ---------------------------------------------------------------------------
// Rubric scores: 0..4 usable levels, -1 "video not clear", NA "cannot say".
// ---------------------------------------------------------------------------

class RubricScore {
public:
  static RubricScore na() { return RubricScore(kNa); }
  static RubricScore not_clear() { return RubricScore(-1); }
  static RubricScore level(int v) {
    require(v >= 0 && v <= 4, Cond::MalformedRecord,
            "rubric level out of range: ", v);
    return RubricScore(static_cast<std::int8_t>(v));
  }

  bool is_na() const { return code_ == kNa; }
  bool is_not_clear() const { return code_ == -1; }
  bool usable() const { return code_ >= 0; }
  /// Numeric value; only valid when usable().
  double value() const { return static_cast<double>(code_); }

  bool operator==(const RubricScore&) const = default;

private:
  static constexpr std::int8_t kNa = -2;
  explicit RubricScore(std::int8_t code) : code_(code) {}
  std::int8_t code_ = 0;
};

struct RatingEntry {
  std::string rater_id;
  RubricScore score = RubricScore::level(0);
  bool operator==(const RatingEntry&) const = default;
};

// ---------------------------------------------------------------------------
// Per-video time series and records
// ---------------------------------------------------------------------------

struct FrameSeries {
  double fps = 15.0;
  /// kNumChannels series of equal length, canonical channel order.
  std::vector<std::vector<double>> channels;
  std::vector<double> face_confidence;

  std::size_t frame_count() const {
    return channels.empty() ? 0 : channels.front().size();
  }
  double duration_s() const {
    return static_cast<double>(frame_count()) / fps;
  }

  bool operator==(const FrameSeries&) const = default;
};

enum class ExclusionReason : std::uint8_t { NotClear, CannotSay, LowFaceCoverage };
const std::string& exclusion_reason_name(ExclusionReason r);

struct VideoRecord {
  std::string video_id;
  std::string candidate_id;
  FrameSeries frames;
  /// Optional per-frame embeddings; outer length equals frame count.
  std::vector<Eigen::VectorXd> embeddings;
  Eigen::VectorXd prosody;
  std::map<SocialSkill, std::vector<RatingEntry>> ratings;
  GroupTags tags;
  bool excluded = false;
  std::optional<ExclusionReason> exclusion_reason;

  bool has_embeddings() const { return !embeddings.empty(); }
};

struct Dataset {
  std::vector<VideoRecord> videos;
  std::vector<std::string> raters;
  int prosody_dim = 0;
  int embedding_dim = 0;  // 0 when no video carries embeddings
  std::vector<SocialSkill> skills;

  /// candidate_id -> indices into videos, in first-appearance order.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> by_candidate() const;
  std::size_t candidate_count() const { return by_candidate().size(); }
};

}  // namespace fairgrade
