#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace slm {

inline constexpr const char* kVersion = "0.1.0";

/// Pipeline stage flags in dependency order.
inline constexpr std::array<const char*, 4> kStageFlags{"rendered", "detected", "fused",
                                                        "tracked"};

/// Stage flag written by a pipeline stage name ("preprocess" -> "rendered").
std::string stage_flag(const std::string& stage);
/// Inverse of stage_flag.
std::string stage_name(const std::string& flag);

struct StageRecord {
  bool done = false;
  bool stale = false;
  nlohmann::json params = nlohmann::json::object();
  std::map<std::string, std::string> hashes;  // relative path -> sha256
};

struct ImageEntry {
  std::string image_id;
  std::string pole;
  int height_index = 0;
  std::string file;  // relative to the session directory
};

struct PreviousSession {
  std::string session;         // directory, relative to this session or absolute
  std::string correspondence;  // file, same convention
};

struct SessionManifest {
  std::string session_id;
  std::string subject_id;
  std::string captured_at;
  std::string cameras = "cameras.json";
  std::string mesh = "mesh/body.obj";
  std::string texture = "mesh/body.png";
  std::vector<ImageEntry> images;
  double resolution_scale = 1.0;
  std::uint64_t seed = 0;
  std::map<std::string, StageRecord> stages;
  std::optional<PreviousSession> previous;
  std::map<std::string, std::string> tool_versions{{"slm", kVersion}};
  /// Generator parameters for synthetic sessions (null otherwise).
  nlohmann::json synthesis;

  StageRecord& stage(const std::string& flag);
  const StageRecord* find_stage(const std::string& flag) const;
  bool done(const std::string& flag) const;
  const ImageEntry* find_image(const std::string& image_id) const;
};

void to_json(nlohmann::json& j, const SessionManifest& m);
void from_json(const nlohmann::json& j, SessionManifest& m);

namespace paths {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kDetections = "detections.json";
inline constexpr const char* kLesions = "lesions3d.json";
inline constexpr const char* kTracks = "tracks.json";
inline constexpr const char* kGtDetections = "gt/detections.json";
inline constexpr const char* kGtLesions = "gt/lesions3d.json";
inline constexpr const char* kCurationLog = "curation_log.jsonl";
std::string depth(const std::string& image_id);
std::string mask(const std::string& image_id);
std::string image(const std::string& image_id);
}  // namespace paths

/// Artifact files a stage produces, relative to the session directory.
std::vector<std::string> stage_artifacts(const SessionManifest& m, const std::string& flag);

/// Reads manifest.json and reconciles its stage flags with the files on
/// disk: a stage whose artifacts are missing, or whose upstream stage is not
/// done, is marked not done.
SessionManifest load_session(const std::filesystem::path& dir);
void save_manifest(const std::filesystem::path& dir, const SessionManifest& m);

/// Resolves a path stored in a manifest against the session directory.
std::filesystem::path resolve(const std::filesystem::path& dir, const std::string& stored);

}  // namespace slm
