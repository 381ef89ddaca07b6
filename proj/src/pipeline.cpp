#include "slm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>

#include "slm/camgeom.hpp"
#include "slm/errors.hpp"
#include "slm/fileio.hpp"
#include "slm/fuse3d.hpp"
#include "slm/parallel.hpp"
#include "slm/track.hpp"

namespace slm {

namespace fs = std::filesystem;

nlohmann::json PipelineConfig::stage_params(const std::string& flag) const {
  if (flag == "rendered") {
    return {{"cylinder",
             {{"center_xz", {cylinder.center_xz.x(), cylinder.center_xz.y()}},
              {"radius", cylinder.radius},
              {"y_min", cylinder.y_min},
              {"y_max", cylinder.y_max}}}};
  }
  if (flag == "detected") {
    nlohmann::json j{{"tile_size", tile_size},
                     {"tile_overlap", tile_overlap},
                     {"scales", log.scales},
                     {"response_threshold", log.response_threshold},
                     {"min_box_px", log.min_box_px},
                     {"nms_sigma", nms.sigma},
                     {"nms_score_floor", nms.score_floor}};
    if (!external_detections.empty()) j["external_detections"] = external_detections;
    return j;
  }
  if (flag == "fused") {
    return {{"cluster_threshold", cluster_threshold}, {"min_cluster_size", min_cluster_size}};
  }
  if (flag == "tracked") {
    return {{"max_geodesic", max_geodesic}, {"truth_tolerance", truth_tolerance}};
  }
  throw ParameterError("unknown stage flag '" + flag + "'");
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    for (const auto& [flag, params] : j.items()) {
      if (flag == "rendered" || flag == "preprocess") {
        if (params.contains("cylinder")) {
          const auto& cyl = params.at("cylinder");
          if (cyl.contains("center_xz")) {
            const auto xz = cyl.at("center_xz").get<std::vector<double>>();
            if (xz.size() != 2) throw FormatError("config: center_xz must have 2 entries");
            c.cylinder.center_xz = {xz[0], xz[1]};
          }
          c.cylinder.radius = cyl.value("radius", c.cylinder.radius);
          c.cylinder.y_min = cyl.value("y_min", c.cylinder.y_min);
          c.cylinder.y_max = cyl.value("y_max", c.cylinder.y_max);
        }
      } else if (flag == "detected" || flag == "detect") {
        c.tile_size = params.value("tile_size", c.tile_size);
        c.tile_overlap = params.value("tile_overlap", c.tile_overlap);
        c.log.scales = params.value("scales", c.log.scales);
        c.log.response_threshold = params.value("response_threshold", c.log.response_threshold);
        c.log.min_box_px = params.value("min_box_px", c.log.min_box_px);
        c.nms.sigma = params.value("nms_sigma", c.nms.sigma);
        c.nms.score_floor = params.value("nms_score_floor", c.nms.score_floor);
        c.external_detections = params.value("external_detections", c.external_detections);
      } else if (flag == "fused" || flag == "fuse") {
        c.cluster_threshold = params.value("cluster_threshold", c.cluster_threshold);
        c.min_cluster_size = params.value("min_cluster_size", c.min_cluster_size);
      } else if (flag == "tracked" || flag == "track") {
        c.max_geodesic = params.value("max_geodesic", c.max_geodesic);
        c.truth_tolerance = params.value("truth_tolerance", c.truth_tolerance);
      } else {
        throw FormatError("config: unknown section '" + flag + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return c;
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  for (const char* flag : kStageFlags) j[stage_name(flag)] = cfg.stage_params(flag);
  return j;
}

std::vector<std::string> pipeline_stages() { return {"preprocess", "detect", "fuse", "track"}; }

namespace {

std::vector<CameraRecord> session_cameras(const fs::path& dir, const SessionManifest& m) {
  return read_cameras(resolve(dir, m.cameras));
}

const CameraRecord& camera_for(const std::vector<CameraRecord>& cams, const std::string& id) {
  for (const auto& c : cams) {
    if (c.id == id) return c;
  }
  throw NotFoundError("no camera for image '" + id + "'");
}

void run_preprocess(const fs::path& dir, const SessionManifest& m, const PipelineConfig& cfg) {
  cfg.cylinder.validate();
  TriMesh mesh = read_obj(resolve(dir, m.mesh));
  const auto cams = session_cameras(dir, m);
  RenderOptions opts;
  opts.depth_only = true;
  parallel_for(m.images.size(), [&](std::size_t i) {
    const auto& cam = camera_for(cams, m.images[i].image_id);
    const RenderOutput out = rasterize(mesh, cam, opts);
    write_pfm(dir / paths::depth(cam.id), out.depth);
    write_png(dir / paths::mask(cam.id), subject_mask(out.depth, cam, cfg.cylinder));
  });
}

void run_detect(const fs::path& dir, const SessionManifest& m, const PipelineConfig& cfg) {
  DetectionSet out;
  for (const auto& e : m.images) out[e.image_id];
  if (!cfg.external_detections.empty()) {
    const auto cams = session_cameras(dir, m);
    DetectionSet ext = read_detections(resolve(dir, cfg.external_detections));
    for (auto& [image_id, dets] : ext) {
      if (!m.find_image(image_id)) throw InputError("external detections: unknown image " + image_id);
      const auto& k = camera_for(cams, image_id).intrinsics;
      std::set<int> ids;
      for (auto& d : dets) {
        if (!ids.insert(d.det_id).second) {
          throw InputError("external detections: duplicate det_id in " + image_id);
        }
        d.image_id = image_id;
        d.source = DetectionSource::external;
        d.bbox = clamp_to_image(d.bbox, k.width, k.height);
      }
      out[image_id] = std::move(dets);
    }
  } else {
    LogParams params = cfg.log;
    params.min_box_px *= m.resolution_scale;
    std::mutex mu;
    parallel_for(m.images.size(), [&](std::size_t i) {
      const auto& entry = m.images[i];
      const GrayImage gray = to_gray(read_png_rgb(resolve(dir, entry.file)));
      const SubjectMask mask = read_png_mask(dir / paths::mask(entry.image_id));
      if (mask.width() != gray.width() || mask.height() != gray.height()) {
        throw InputError("mask and image sizes differ for " + entry.image_id);
      }
      const TileGrid grid = tile(gray.width(), gray.height(), cfg.tile_size, cfg.tile_overlap);
      auto dets = detect_tiled(gray, mask, grid, params, cfg.nms);
      for (std::size_t k = 0; k < dets.size(); ++k) {
        dets[k].image_id = entry.image_id;
        dets[k].det_id = static_cast<int>(k) + 1;
      }
      const std::lock_guard lock(mu);
      out[entry.image_id] = std::move(dets);
    });
  }
  write_detections(dir / paths::kDetections, out);
}

void run_fuse(const fs::path& dir, const SessionManifest& m, const PipelineConfig& cfg) {
  const DetectionSet dets = read_detections(dir / paths::kDetections);
  const auto cams = session_cameras(dir, m);
  std::vector<std::string> image_ids;
  for (const auto& [id, list] : dets) image_ids.push_back(id);
  std::vector<std::vector<std::optional<Sighting3D>>> lifted(image_ids.size());
  parallel_for(image_ids.size(), [&](std::size_t i) {
    const auto& list = dets.at(image_ids[i]);
    if (std::none_of(list.begin(), list.end(), [](const auto& d) { return !d.removed; })) return;
    const auto& cam = camera_for(cams, image_ids[i]);
    const DepthImage depth = read_pfm(dir / paths::depth(image_ids[i]));
    const SubjectMask mask = read_png_mask(dir / paths::mask(image_ids[i]));
    for (const auto& d : list) {
      if (!d.removed) lifted[i].push_back(lift(d, depth, mask, cam));
    }
  });
  std::vector<Sighting3D> sightings;
  LesionRegistry registry;
  for (std::size_t i = 0; i < image_ids.size(); ++i) {
    std::size_t k = 0;
    for (const auto& d : dets.at(image_ids[i])) {
      if (d.removed) continue;
      const auto& s = lifted[i][k++];
      if (s) {
        sightings.push_back(*s);
      } else {
        registry.off_subject.push_back({d.image_id, d.det_id});
      }
    }
  }
  const Clustering clusters = cluster(sightings, cfg.cluster_threshold, cfg.min_cluster_size);
  TriMesh mesh = read_obj(resolve(dir, m.mesh));
  registry.lesions = build_registry(sightings, clusters.clusters, mesh);
  for (const auto& r : clusters.rejected) {
    std::vector<LesionMember> members;
    for (auto idx : r) members.push_back({sightings[idx].image_id, sightings[idx].det_id});
    registry.rejected.push_back(std::move(members));
  }
  write_registry(dir / paths::kLesions, registry);
}

void run_track(const fs::path& dir, const SessionManifest& m, const PipelineConfig& cfg) {
  TrackResult result;
  if (m.previous) {
    const fs::path prev_dir = resolve(dir, m.previous->session);
    const SessionManifest prev = load_session(prev_dir);
    if (!prev.done("fused")) throw DependencyError("track", "fuse (previous session)");
    const LesionRegistry reg_t = read_registry(prev_dir / paths::kLesions);
    const LesionRegistry reg_t1 = read_registry(dir / paths::kLesions);
    const CorrespondenceMap corr = read_correspondence(resolve(dir, m.previous->correspondence));
    const TriMesh mesh_t = read_obj(resolve(prev_dir, prev.mesh));
    const TriMesh mesh_t1 = read_obj(resolve(dir, m.mesh));
    corr.validate(mesh_t.vertices.size(), mesh_t1.vertices.size());
    result.pairs = match_lesions(reg_t.lesions, reg_t1.lesions, corr, mesh_t1, cfg.max_geodesic);
    if (fs::exists(prev_dir / paths::kGtLesions) && fs::exists(dir / paths::kGtLesions)) {
      const auto truth_t = read_registry(prev_dir / paths::kGtLesions);
      const auto truth_t1 = read_registry(dir / paths::kGtLesions);
      const auto gt = truth_pairs(label_lesions(reg_t.lesions, truth_t.lesions, cfg.truth_tolerance),
                                  label_lesions(reg_t1.lesions, truth_t1.lesions, cfg.truth_tolerance));
      if (!gt.empty()) result.accuracy = longitudinal_accuracy(result.pairs, gt);
    }
  }
  write_tracks(dir / paths::kTracks, result);
}

const std::map<std::string, std::string> kPrerequisite{
    {"detect", "preprocess"}, {"fuse", "detect"}, {"track", "fuse"}};

std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

SessionManifest run_pipeline(const fs::path& dir, const std::vector<std::string>& stages,
                             const PipelineConfig& config) {
  std::set<std::string> requested;
  for (const auto& s : stages) {
    stage_flag(s);  // validates the name
    requested.insert(s);
  }
  SessionManifest m = load_session(dir);
  const auto order = pipeline_stages();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::string& stage = order[i];
    if (!requested.count(stage)) continue;
    const auto pre = kPrerequisite.find(stage);
    if (pre != kPrerequisite.end() && !m.done(stage_flag(pre->second))) {
      throw DependencyError(stage, pre->second);
    }
    if (stage == "preprocess") run_preprocess(dir, m, config);
    if (stage == "detect") run_detect(dir, m, config);
    if (stage == "fuse") run_fuse(dir, m, config);
    if (stage == "track") run_track(dir, m, config);

    const std::string flag = stage_flag(stage);
    StageRecord& rec = m.stage(flag);
    rec.done = true;
    rec.stale = false;
    rec.params = config.stage_params(flag);
    rec.hashes.clear();
    for (const auto& rel : stage_artifacts(m, flag)) rec.hashes[rel] = sha256_file(dir / rel);
    for (std::size_t k = i + 1; k < order.size(); ++k) {
      StageRecord& down = m.stage(stage_flag(order[k]));
      down.done = false;
      down.stale = false;
    }
    save_manifest(dir, m);
  }
  return m;
}

void link_previous_session(const fs::path& dir, const fs::path& prev_dir,
                           const CorrespondenceMap& corr) {
  SessionManifest m = load_session(dir);
  write_correspondence(dir / "correspondence.json", corr);
  const fs::path rel = fs::relative(fs::absolute(prev_dir), fs::absolute(dir));
  m.previous = PreviousSession{rel.empty() ? fs::absolute(prev_dir).string() : rel.string(),
                               "correspondence.json"};
  StageRecord& tracked = m.stage("tracked");
  tracked.done = false;
  tracked.stale = false;
  save_manifest(dir, m);
}

std::string to_string(EditAction action) {
  switch (action) {
    case EditAction::remove: return "remove";
    case EditAction::restore: return "restore";
    case EditAction::annotate: return "annotate";
  }
  return "annotate";
}

EditAction edit_action_from_string(const std::string& text) {
  if (text == "remove") return EditAction::remove;
  if (text == "restore") return EditAction::restore;
  if (text == "annotate") return EditAction::annotate;
  throw ParameterError("unknown edit action '" + text + "'");
}

Detection2D apply_edit(const fs::path& dir, const CurationEdit& edit,
                       const std::function<void()>& before_rename) {
  const fs::path path = dir / paths::kDetections;
  if (!fs::exists(path)) throw NotFoundError("session has no detections");
  DetectionSet set = read_detections(path);
  const auto it = set.find(edit.image_id);
  if (it == set.end()) throw NotFoundError("unknown image '" + edit.image_id + "'");
  auto det = std::find_if(it->second.begin(), it->second.end(),
                          [&](const Detection2D& d) { return d.det_id == edit.det_id; });
  if (det == it->second.end()) {
    throw NotFoundError("unknown detection " + std::to_string(edit.det_id) + " in image '" +
                        edit.image_id + "'");
  }
  switch (edit.action) {
    case EditAction::remove: det->removed = true; break;
    case EditAction::restore: det->removed = false; break;
    case EditAction::annotate: det->notes = edit.notes; break;
  }
  const Detection2D updated = *det;
  write_file_atomic(path, detections_to_json(set).dump(2) + "\n", before_rename);

  nlohmann::json log{{"image_id", edit.image_id},
                     {"det_id", edit.det_id},
                     {"action", to_string(edit.action)},
                     {"notes", edit.notes},
                     {"edited_at", edit.edited_at.empty() ? now_iso8601() : edit.edited_at}};
  {
    std::ofstream out(dir / paths::kCurationLog, std::ios::app);
    out << log.dump() << "\n";
  }

  if (edit.action == EditAction::remove && fs::exists(dir / paths::kLesions) &&
      fs::exists(dir / paths::kManifest)) {
    const LesionRegistry registry = read_registry(dir / paths::kLesions);
    const LesionMember key{edit.image_id, edit.det_id};
    const bool member = std::any_of(registry.lesions.begin(), registry.lesions.end(),
                                    [&](const GlobalLesion& l) {
                                      return std::find(l.members.begin(), l.members.end(), key) !=
                                             l.members.end();
                                    });
    if (member) {
      SessionManifest m = load_session(dir);
      if (m.done("fused")) {
        m.stage("fused").stale = true;
        if (m.done("tracked")) m.stage("tracked").stale = true;
        save_manifest(dir, m);
      }
    }
  }
  return updated;
}

}  // namespace slm
