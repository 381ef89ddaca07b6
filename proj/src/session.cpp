#include "slm/session.hpp"

#include "slm/errors.hpp"
#include "slm/fileio.hpp"

namespace slm {

namespace {

const std::map<std::string, std::string> kFlagOfStage{
    {"preprocess", "rendered"}, {"detect", "detected"}, {"fuse", "fused"}, {"track", "tracked"}};

}  // namespace

std::string stage_flag(const std::string& stage) {
  const auto it = kFlagOfStage.find(stage);
  if (it == kFlagOfStage.end()) throw ParameterError("unknown pipeline stage '" + stage + "'");
  return it->second;
}

std::string stage_name(const std::string& flag) {
  for (const auto& [stage, f] : kFlagOfStage) {
    if (f == flag) return stage;
  }
  throw ParameterError("unknown stage flag '" + flag + "'");
}

StageRecord& SessionManifest::stage(const std::string& flag) { return stages[flag]; }

const StageRecord* SessionManifest::find_stage(const std::string& flag) const {
  const auto it = stages.find(flag);
  return it == stages.end() ? nullptr : &it->second;
}

bool SessionManifest::done(const std::string& flag) const {
  const auto* s = find_stage(flag);
  return s && s->done;
}

const ImageEntry* SessionManifest::find_image(const std::string& image_id) const {
  for (const auto& e : images) {
    if (e.image_id == image_id) return &e;
  }
  return nullptr;
}

void to_json(nlohmann::json& j, const SessionManifest& m) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& e : m.images) {
    images.push_back({{"image_id", e.image_id},
                      {"pole", e.pole},
                      {"height_index", e.height_index},
                      {"file", e.file}});
  }
  nlohmann::json stages = nlohmann::json::object();
  for (const char* flag : kStageFlags) {
    const auto* s = m.find_stage(flag);
    const StageRecord record = s ? *s : StageRecord{};
    stages[flag] = {{"done", record.done},
                    {"stale", record.stale},
                    {"params", record.params},
                    {"hashes", record.hashes}};
  }
  j = {{"session_id", m.session_id},
       {"subject_id", m.subject_id},
       {"captured_at", m.captured_at},
       {"cameras", m.cameras},
       {"mesh", m.mesh},
       {"texture", m.texture},
       {"images", images},
       {"resolution_scale", m.resolution_scale},
       {"seed", m.seed},
       {"stages", stages},
       {"tool_versions", m.tool_versions}};
  if (!m.synthesis.is_null()) j["synthesis"] = m.synthesis;
  if (m.previous) {
    j["previous"] = {{"session", m.previous->session},
                     {"correspondence", m.previous->correspondence}};
  }
}

void from_json(const nlohmann::json& j, SessionManifest& m) {
  try {
    m.session_id = j.at("session_id").get<std::string>();
    m.subject_id = j.value("subject_id", std::string{});
    m.captured_at = j.value("captured_at", std::string{});
    m.cameras = j.value("cameras", std::string("cameras.json"));
    m.mesh = j.value("mesh", std::string("mesh/body.obj"));
    m.texture = j.value("texture", std::string("mesh/body.png"));
    m.images.clear();
    for (const auto& e : j.at("images")) {
      m.images.push_back({e.at("image_id").get<std::string>(), e.value("pole", std::string{}),
                          e.value("height_index", 0),
                          e.value("file", paths::image(e.at("image_id").get<std::string>()))});
    }
    m.resolution_scale = j.value("resolution_scale", 1.0);
    m.seed = j.value("seed", std::uint64_t{0});
    m.stages.clear();
    if (j.contains("stages")) {
      for (const auto& [flag, s] : j.at("stages").items()) {
        StageRecord record;
        record.done = s.value("done", false);
        record.stale = s.value("stale", false);
        record.params = s.value("params", nlohmann::json::object());
        record.hashes = s.value("hashes", std::map<std::string, std::string>{});
        m.stages[flag] = std::move(record);
      }
    }
    m.previous.reset();
    if (j.contains("previous") && !j.at("previous").is_null()) {
      m.previous = PreviousSession{j.at("previous").at("session").get<std::string>(),
                                   j.at("previous").at("correspondence").get<std::string>()};
    }
    m.synthesis = j.value("synthesis", nlohmann::json());
    if (j.contains("tool_versions")) {
      m.tool_versions = j.at("tool_versions").get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

namespace paths {
std::string depth(const std::string& image_id) { return "depth/" + image_id + ".pfm"; }
std::string mask(const std::string& image_id) { return "masks/" + image_id + ".png"; }
std::string image(const std::string& image_id) { return "images/" + image_id + ".png"; }
}  // namespace paths

std::vector<std::string> stage_artifacts(const SessionManifest& m, const std::string& flag) {
  std::vector<std::string> out;
  if (flag == "rendered") {
    for (const auto& e : m.images) {
      out.push_back(paths::depth(e.image_id));
      out.push_back(paths::mask(e.image_id));
    }
  } else if (flag == "detected") {
    out.push_back(paths::kDetections);
  } else if (flag == "fused") {
    out.push_back(paths::kLesions);
  } else if (flag == "tracked") {
    out.push_back(paths::kTracks);
  } else {
    throw ParameterError("unknown stage flag '" + flag + "'");
  }
  return out;
}

SessionManifest load_session(const std::filesystem::path& dir) {
  const auto path = dir / paths::kManifest;
  if (!std::filesystem::exists(path)) {
    throw NotFoundError("no session manifest at " + path.string());
  }
  SessionManifest m = read_json(path).get<SessionManifest>();
  bool upstream_done = true;
  for (const char* flag : kStageFlags) {
    auto& s = m.stage(flag);
    if (s.done) {
      for (const auto& rel : stage_artifacts(m, flag)) {
        if (!std::filesystem::exists(dir / rel)) {
          s.done = false;
          break;
        }
      }
    }
    if (!upstream_done) s.done = false;
    upstream_done = s.done;
  }
  return m;
}

void save_manifest(const std::filesystem::path& dir, const SessionManifest& m) {
  write_json(dir / paths::kManifest, nlohmann::json(m));
}

std::filesystem::path resolve(const std::filesystem::path& dir, const std::string& stored) {
  const std::filesystem::path p(stored);
  return p.is_absolute() ? p : dir / p;
}

}  // namespace slm
