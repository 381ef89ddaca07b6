#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "slm/camgeom.hpp"
#include "slm/detect.hpp"
#include "slm/mesh.hpp"
#include "slm/phantom.hpp"
#include "slm/render.hpp"
#include "slm/track.hpp"

namespace slm {

struct RigConfig {
  int n_poles = 15;
  std::vector<double> heights_m{0.3, 0.8, 1.3, 1.8};
  double radius_m = 1.1;
  int image_width = 4000;
  int image_height = 6000;
  double focal_mm = 18.0;
  double sensor_width_mm = 22.3;
  /// Aim height per height ring; empty means each ring aims at its own
  /// mounting height.
  std::vector<double> look_at_heights_m;
  /// Multiplies the image size and intrinsics (0.25 for desk-scale runs).
  double resolution_scale = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const RigConfig& cfg);
void from_json(const nlohmann::json& j, RigConfig& cfg);

/// Pole letter for index k (A, B, ..., Z, then AA, AB, ...).
std::string pole_letter(int k);

struct RigCamera {
  CameraRecord camera;
  std::string pole;
  int height_index = 0;  // 1 = lowest ring
};

/// n_poles x heights cameras in portrait orientation. Pole k sits at azimuth
/// 360k/n degrees measured from +z toward +x, at the rig radius; each camera
/// looks at the rig axis. Ids are "<pole><height index>", ordered pole-major.
std::vector<RigCamera> generate_rig(const RigConfig& cfg);

/// Poles visible in the front view of the default 15-pole rig.
std::vector<std::string> front_view_poles();

struct SyntheticLesionSpec {
  int id = 0;
  Vec3 surface_point = Vec3::Zero();
  double diameter_mm = 8.0;
  Rgb color{92, 58, 40};
};

/// Surface points of painted texels per lesion id.
using PaintedLesions = std::map<int, std::vector<Vec3>>;

/// Paints each lesion into the mesh texture as the set of surface texels
/// within diameter/2 of its surface point. Throws ParameterError if a point
/// lies farther than 1 mm from the surface or the mesh is untextured.
PaintedLesions paint_lesions(TriMesh& mesh, const std::vector<SyntheticLesionSpec>& lesions);

struct VisibilityParams {
  double depth_tolerance_m = 0.005;
  double min_box_px = 5.0;  // at full resolution; scaled with the images
};

/// Tight box around the projections of a lesion's painted points that pass
/// the depth test, or nothing if the lesion is hidden in this view.
std::optional<BBox> ground_truth_box(const SyntheticLesionSpec& lesion,
                                     const std::vector<Vec3>& painted, const CameraRecord& cam,
                                     const DepthImage& depth, const VisibilityParams& params,
                                     double resolution_scale);

struct SynthesisOptions {
  std::string session_id;
  std::string subject_id = "phantom";
  std::string captured_at = "2024-01-01T09:00:00Z";
  std::uint64_t seed = 0;
  CaptureCylinder cylinder;
  VisibilityParams visibility;
};

/// Writes a complete capture session under `dir`: images, depth, masks,
/// cameras.json, mesh/body.obj with its texture, gt/detections.json,
/// gt/lesions3d.json and manifest.json.
void synthesize_session(const std::filesystem::path& dir, const TriMesh& mesh,
                        const RigConfig& cfg, const std::vector<SyntheticLesionSpec>& lesions,
                        const SynthesisOptions& options);

/// Phantom capture: lesions are placed on the upright phantom, then the body
/// is optionally bent, carrying the lesions along.
struct PhantomSessionSpec {
  std::string session_id;
  std::string subject_id = "phantom";
  std::string captured_at = "2024-01-01T09:00:00Z";
  std::uint64_t seed = 1;
  int lesion_count = 20;
  double diameter_mm = 8.0;
  double bend_deg = 0.0;
  RigConfig rig;
  PhantomParams phantom;
  LesionPlacement placement;
};

/// Phantom mesh in the pose of `spec` (before painting).
TriMesh phantom_mesh(const PhantomSessionSpec& spec);
std::vector<SyntheticLesionSpec> phantom_lesions(const PhantomSessionSpec& spec);
void synthesize_phantom_session(const std::filesystem::path& dir, const PhantomSessionSpec& spec);

/// Correspondence from mesh A to mesh B after displacing each true
/// counterpart position by isotropic Gaussian noise (sigma per axis) and
/// snapping to the nearest vertex of B. `truth` gives the exact map.
CorrespondenceMap perturb_correspondence(const CorrespondenceMap& truth, const TriMesh& mesh_b,
                                         double sigma_m, std::uint64_t seed);

}  // namespace slm
