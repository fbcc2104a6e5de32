#include "fairgrade/dataset.hpp"

#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "fairgrade/io.hpp"

namespace fairgrade {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(std::size_t line, const std::string& field,
                            const std::string& why) {
  raise(Cond::MalformedRecord, "line ", line, ", field '", field, "': ", why);
}

std::vector<double> parse_series(const json& j, std::size_t line,
                                 const std::string& field) {
  if (!j.is_array()) malformed(line, field, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) malformed(line, field, "non-numeric entry");
    const double x = v.get<double>();
    if (!std::isfinite(x)) malformed(line, field, "non-finite entry");
    out.push_back(x);
  }
  return out;
}

RubricScore parse_score(const json& j, std::size_t line) {
  if (j.is_string()) {
    if (j.get<std::string>() == "NA") return RubricScore::na();
    malformed(line, "score", "string score must be \"NA\"");
  }
  if (j.is_null()) return RubricScore::na();
  if (!j.is_number_integer()) {
    malformed(line, "score", "score must be an integer, -1 or \"NA\"");
  }
  const int v = j.get<int>();
  if (v == -1) return RubricScore::not_clear();
  if (v < 0 || v > 4) malformed(line, "score", "rubric level out of range");
  return RubricScore::level(v);
}

VideoRecord parse_record(const json& j, std::size_t line,
                         const IngestionConfig& cfg, std::size_t& warnings) {
  VideoRecord rec;
  if (!j.is_object()) malformed(line, "<record>", "expected a JSON object");

  auto get_str = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_string() ||
        j.at(key).get<std::string>().empty()) {
      malformed(line, key, "missing or empty string");
    }
    return j.at(key).get<std::string>();
  };
  rec.video_id = get_str("video_id");
  rec.candidate_id = get_str("candidate_id");

  rec.frames.fps = j.value("fps", 15.0);
  if (!(rec.frames.fps > 0.0)) malformed(line, "fps", "fps must be positive");

  if (!j.contains("frames") || !j.at("frames").is_object()) {
    malformed(line, "frames", "missing channel object");
  }
  const auto& frames = j.at("frames");
  rec.frames.channels.resize(kNumChannels);
  std::size_t frame_count = 0;
  for (int c = 0; c < kNumChannels; ++c) {
    const auto& name = channel_names()[c];
    if (!frames.contains(name)) malformed(line, name, "missing channel");
    auto series = parse_series(frames.at(name), line, name);
    if (c == 0) {
      frame_count = series.size();
      if (frame_count == 0) malformed(line, name, "channel must be non-empty");
    } else if (series.size() != frame_count) {
      raise(Cond::DimensionMismatch, "line ", line, ", channel ", name,
            ": expected ", frame_count, " frames, got ", series.size());
    }
    if (is_action_unit(c)) {
      for (double& v : series) {
        if (v < cfg.au_min) {
          v = cfg.au_min;
          ++warnings;
        } else if (v > cfg.au_max) {
          v = cfg.au_max;
          ++warnings;
        }
      }
    }
    rec.frames.channels[c] = std::move(series);
  }

  if (!j.contains("face_confidence")) {
    malformed(line, "face_confidence", "missing");
  }
  rec.frames.face_confidence =
      parse_series(j.at("face_confidence"), line, "face_confidence");
  if (rec.frames.face_confidence.size() != frame_count) {
    raise(Cond::DimensionMismatch, "line ", line,
          ": face_confidence expected ", frame_count, " entries, got ",
          rec.frames.face_confidence.size());
  }
  for (double v : rec.frames.face_confidence) {
    if (v < 0.0 || v > 1.0) {
      malformed(line, "face_confidence", "value outside [0, 1]");
    }
  }

  if (j.contains("embeddings")) {
    const auto& emb = j.at("embeddings");
    if (!emb.is_array()) malformed(line, "embeddings", "expected array");
    if (emb.size() != frame_count) {
      raise(Cond::DimensionMismatch, "line ", line, ": embeddings expected ",
            frame_count, " frames, got ", emb.size());
    }
    rec.embeddings.reserve(emb.size());
    std::size_t dim = 0;
    for (const auto& row : emb) {
      auto vals = parse_series(row, line, "embeddings");
      if (rec.embeddings.empty()) {
        dim = vals.size();
        if (dim == 0) malformed(line, "embeddings", "empty embedding vector");
      } else if (vals.size() != dim) {
        raise(Cond::DimensionMismatch, "line ", line,
              ": embedding dim expected ", dim, ", got ", vals.size());
      }
      rec.embeddings.push_back(
          Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size()));
    }
  }

  if (!j.contains("prosody")) malformed(line, "prosody", "missing");
  auto pros = parse_series(j.at("prosody"), line, "prosody");
  if (pros.empty()) malformed(line, "prosody", "must be non-empty");
  rec.prosody = Eigen::Map<const Eigen::VectorXd>(pros.data(), pros.size());

  if (!j.contains("ratings") || !j.at("ratings").is_object()) {
    malformed(line, "ratings", "missing ratings object");
  }
  for (const auto& [key, entries] : j.at("ratings").items()) {
    SocialSkill skill;
    try {
      skill = skill_from_name(key);
    } catch (const Error&) {
      malformed(line, "ratings", "unknown skill key '" + key + "'");
    }
    if (!entries.is_array() || entries.empty()) {
      malformed(line, key, "each rated skill needs at least one entry");
    }
    std::vector<RatingEntry> list;
    for (const auto& e : entries) {
      if (!e.is_object() || !e.contains("rater") || !e.contains("score")) {
        malformed(line, key, "rating entries need 'rater' and 'score'");
      }
      RatingEntry entry;
      entry.rater_id = e.at("rater").get<std::string>();
      entry.score = parse_score(e.at("score"), line);
      list.push_back(std::move(entry));
    }
    rec.ratings[skill] = std::move(list);
  }
  if (rec.ratings.empty()) malformed(line, "ratings", "no rated skills");

  if (!j.contains("tags") || !j.at("tags").is_object()) {
    malformed(line, "tags", "missing tags object");
  }
  const auto& tags = j.at("tags");
  try {
    rec.tags.gender = gender_from_name(tags.at("gender").get<std::string>());
    rec.tags.race = race_from_name(tags.at("race").get<std::string>());
    rec.tags.country = country_from_name(tags.at("country").get<std::string>());
  } catch (const json::exception&) {
    malformed(line, "tags", "tags need string gender/race/country");
  } catch (const Error& e) {
    malformed(line, "tags", e.what());
  }

  if (j.contains("excluded")) {
    rec.excluded = j.at("excluded").get<bool>();
  }
  if (j.contains("exclusion_reason")) {
    const auto name = j.at("exclusion_reason").get<std::string>();
    for (ExclusionReason r : {ExclusionReason::NotClear,
                              ExclusionReason::CannotSay,
                              ExclusionReason::LowFaceCoverage}) {
      if (exclusion_reason_name(r) == name) rec.exclusion_reason = r;
    }
    if (!rec.exclusion_reason) malformed(line, "exclusion_reason", "unknown");
  }
  return rec;
}

}  // namespace

LoadResult load_dataset(const std::string& path, const IngestionConfig& cfg) {
  std::ifstream in(path);
  require(in.good(), Cond::IoError, "cannot open ", path);

  LoadResult result;
  Dataset& ds = result.dataset;
  std::map<std::string, bool> rater_seen;
  std::map<SocialSkill, bool> skill_seen;

  std::string text_line;
  std::size_t line_no = 0;
  while (std::getline(in, text_line)) {
    ++line_no;
    if (text_line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text_line);
    } catch (const json::exception& e) {
      malformed(line_no, "<json>", e.what());
    }
    VideoRecord rec = parse_record(j, line_no, cfg, result.clamp_warnings);

    if (ds.videos.empty()) {
      ds.prosody_dim = cfg.expected_prosody_dim > 0
                           ? cfg.expected_prosody_dim
                           : static_cast<int>(rec.prosody.size());
    }
    if (static_cast<int>(rec.prosody.size()) != ds.prosody_dim) {
      raise(Cond::DimensionMismatch, "line ", line_no, ": prosody expected ",
            ds.prosody_dim, " dims, got ", rec.prosody.size());
    }
    if (rec.has_embeddings()) {
      const int dim = static_cast<int>(rec.embeddings.front().size());
      if (ds.embedding_dim == 0) {
        ds.embedding_dim = dim;
      } else if (dim != ds.embedding_dim) {
        raise(Cond::DimensionMismatch, "line ", line_no,
              ": embedding dim expected ", ds.embedding_dim, ", got ", dim);
      }
    }
    for (const auto& [skill, entries] : rec.ratings) {
      skill_seen[skill] = true;
      for (const auto& e : entries) rater_seen[e.rater_id] = true;
    }
    ds.videos.push_back(std::move(rec));
  }
  require(!ds.videos.empty(), Cond::EmptyDataset, "no records in ", path);

  for (const auto& [id, _] : rater_seen) ds.raters.push_back(id);
  for (SocialSkill s : kAllSkills) {
    if (skill_seen.count(s)) ds.skills.push_back(s);
  }

  for (const auto& [cid, idxs] : ds.by_candidate()) {
    int usable = 0;
    for (std::size_t i : idxs) {
      if (!ds.videos[i].excluded) ++usable;
    }
    if (usable < cfg.min_videos_per_candidate) {
      raise(Cond::MalformedRecord, "candidate ", cid, " has ", usable,
            " non-excluded videos; ", cfg.min_videos_per_candidate,
            " required");
    }
  }
  return result;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ostringstream out;
  for (const auto& rec : ds.videos) {
    json j;
    j["video_id"] = rec.video_id;
    j["candidate_id"] = rec.candidate_id;
    j["fps"] = rec.frames.fps;
    json frames = json::object();
    for (int c = 0; c < kNumChannels; ++c) {
      frames[channel_names()[c]] = rec.frames.channels[c];
    }
    j["frames"] = std::move(frames);
    j["face_confidence"] = rec.frames.face_confidence;
    if (rec.has_embeddings()) {
      json emb = json::array();
      for (const auto& e : rec.embeddings) {
        emb.push_back(std::vector<double>(e.data(), e.data() + e.size()));
      }
      j["embeddings"] = std::move(emb);
    }
    j["prosody"] = std::vector<double>(rec.prosody.data(),
                                       rec.prosody.data() + rec.prosody.size());
    json ratings = json::object();
    for (const auto& [skill, entries] : rec.ratings) {
      json list = json::array();
      for (const auto& e : entries) {
        json item;
        item["rater"] = e.rater_id;
        if (e.score.is_na()) {
          item["score"] = "NA";
        } else if (e.score.is_not_clear()) {
          item["score"] = -1;
        } else {
          item["score"] = static_cast<int>(e.score.value());
        }
        list.push_back(std::move(item));
      }
      ratings[skill_name(skill)] = std::move(list);
    }
    j["ratings"] = std::move(ratings);
    j["tags"] = {{"gender", gender_name(rec.tags.gender)},
                 {"race", race_name(rec.tags.race)},
                 {"country", country_name(rec.tags.country)}};
    if (rec.excluded) {
      j["excluded"] = true;
      if (rec.exclusion_reason) {
        j["exclusion_reason"] = exclusion_reason_name(*rec.exclusion_reason);
      }
    }
    out << j.dump() << "\n";
  }
  io::atomic_write(path, out.str());
}

Dataset apply_exclusions(const Dataset& ds, const ExclusionConfig& cfg) {
  Dataset out = ds;
  for (auto& rec : out.videos) {
    if (rec.excluded) continue;
    bool not_clear = false;
    bool cannot_say = false;
    for (const auto& [skill, entries] : rec.ratings) {
      int n_not_clear = 0;
      int n_na = 0;
      for (const auto& e : entries) {
        if (e.score.is_not_clear()) ++n_not_clear;
        if (e.score.is_na()) ++n_na;
      }
      if (n_not_clear > cfg.max_special_raters) not_clear = true;
      if (n_na > cfg.max_special_raters) cannot_say = true;
    }
    if (not_clear || cannot_say) {
      rec.excluded = true;
      rec.exclusion_reason = not_clear ? ExclusionReason::NotClear
                                       : ExclusionReason::CannotSay;
    }
  }
  return out;
}

}  // namespace fairgrade
