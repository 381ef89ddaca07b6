#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slm/detect.hpp"
#include "slm/render.hpp"
#include "slm/session.hpp"
#include "slm/track.hpp"

namespace slm {

struct PipelineConfig {
  CaptureCylinder cylinder;
  int tile_size = 608;
  double tile_overlap = 0.5;
  LogParams log;  // min_box_px is at full resolution and scaled per session
  NmsParams nms;
  std::string external_detections;  // ingest this file instead of running LoG
  double cluster_threshold = 0.02;
  std::size_t min_cluster_size = 3;
  double max_geodesic = 0.05;
  double truth_tolerance = 0.01;  // centroid-to-truth distance for labeling

  nlohmann::json stage_params(const std::string& flag) const;
};

/// Reads a partial config; absent keys keep their defaults.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);

/// Canonical stage order.
std::vector<std::string> pipeline_stages();

/// Runs the requested stages ("preprocess", "detect", "fuse", "track") in
/// pipeline order. Each stage writes its artifacts, records its parameters
/// and artifact hashes in the manifest and clears every downstream flag.
/// Throws DependencyError when a prerequisite has not run.
SessionManifest run_pipeline(const std::filesystem::path& dir,
                             const std::vector<std::string>& stages,
                             const PipelineConfig& config = {});

/// Records `prev_dir` as the earlier scan of the session in `dir` and stores
/// the vertex correspondence beside it as correspondence.json.
void link_previous_session(const std::filesystem::path& dir, const std::filesystem::path& prev_dir,
                           const CorrespondenceMap& corr);

enum class EditAction { remove, restore, annotate };

std::string to_string(EditAction action);
EditAction edit_action_from_string(const std::string& text);

struct CurationEdit {
  std::string image_id;
  int det_id = 0;
  EditAction action = EditAction::annotate;
  std::string notes;
  std::string edited_at;  // ISO-8601; filled with the current time when empty
};

/// Applies one curation edit to detections.json with an atomic replace.
/// Removal keeps the record with removed = true. Removing a detection that
/// belongs to a fused lesion marks the fused stage stale. `before_rename`
/// runs after the new file is written and before it replaces the old one.
/// Throws NotFoundError for an unknown detection.
Detection2D apply_edit(const std::filesystem::path& dir, const CurationEdit& edit,
                       const std::function<void()>& before_rename = {});

}  // namespace slm
