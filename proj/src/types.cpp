#include "fairgrade/types.hpp"

#include <algorithm>

namespace fairgrade {

const std::array<std::string, kNumChannels>& channel_names() {
  // The 17 OpenFace intensity AUs followed by the 6 head-pose channels.
  static const std::array<std::string, kNumChannels> names = {
      "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10",
      "AU12", "AU14", "AU15", "AU17", "AU20", "AU23", "AU25", "AU26",
      "AU45", "pose_tx", "pose_ty", "pose_tz", "pose_rx", "pose_ry",
      "pose_rz"};
  return names;
}

int channel_index(const std::string& name) {
  const auto& names = channel_names();
  const auto it = std::find(names.begin(), names.end(), name);
  require(it != names.end(), Cond::UnknownChannel, "unknown channel: ", name);
  return static_cast<int>(it - names.begin());
}

const std::string& skill_name(SocialSkill s) {
  static const std::array<std::string, kNumSkills> names = {
      "positive_emotion", "calmness", "confidence", "engagement"};
  return names[static_cast<std::size_t>(s)];
}

SocialSkill skill_from_name(const std::string& name) {
  for (SocialSkill s : kAllSkills) {
    if (skill_name(s) == name) return s;
  }
  raise(Cond::MalformedRecord, "unknown social skill: ", name);
}

const std::string& gender_name(Gender g) {
  static const std::array<std::string, 2> names = {"Male", "Female"};
  return names[static_cast<std::size_t>(g)];
}

const std::string& race_name(Race r) {
  static const std::array<std::string, 5> names = {
      "Caucasian", "AfricanAmerican", "Asian", "Indian", "Others"};
  return names[static_cast<std::size_t>(r)];
}

const std::string& country_name(Country c) {
  static const std::array<std::string, 4> names = {"India", "US", "UK",
                                                   "OtherEurope"};
  return names[static_cast<std::size_t>(c)];
}

template <typename Enum, typename All>
static Enum enum_from_name(const std::string& name, const All& all,
                           const std::string& (*to_name)(Enum),
                           const char* what) {
  for (Enum v : all) {
    if (to_name(v) == name) return v;
  }
  raise(Cond::MalformedRecord, "unknown ", what, ": ", name);
}

Gender gender_from_name(const std::string& name) {
  return enum_from_name<Gender>(name, kAllGenders, gender_name, "gender");
}
Race race_from_name(const std::string& name) {
  return enum_from_name<Race>(name, kAllRaces, race_name, "race");
}
Country country_from_name(const std::string& name) {
  return enum_from_name<Country>(name, kAllCountries, country_name, "country");
}

const std::string& exclusion_reason_name(ExclusionReason r) {
  static const std::array<std::string, 3> names = {"NotClear", "CannotSay",
                                                   "LowFaceCoverage"};
  return names[static_cast<std::size_t>(r)];
}

std::vector<std::pair<std::string, std::vector<std::size_t>>>
Dataset::by_candidate() const {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto& cid = videos[i].candidate_id;
    auto it = pos.find(cid);
    if (it == pos.end()) {
      pos.emplace(cid, out.size());
      out.push_back({cid, {i}});
    } else {
      out[it->second].second.push_back(i);
    }
  }
  return out;
}

}  // namespace fairgrade
