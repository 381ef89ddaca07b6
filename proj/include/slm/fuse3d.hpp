#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slm/camgeom.hpp"
#include "slm/detect.hpp"
#include "slm/image.hpp"
#include "slm/mesh.hpp"

namespace slm {

enum class LiftStatus { center_hit, fallback_hit };

struct Sighting3D {
  std::string image_id;
  int det_id = 0;
  Vec3 point = Vec3::Zero();
  LiftStatus lift_status = LiftStatus::center_hit;
};

/// Lifts a detection's box center to 3D through the depth map. When the
/// center pixel is off-subject, the masked pixel inside the box nearest to
/// the center is used instead (ties: smaller y, then smaller x). Returns
/// nullopt when the box holds no masked pixel.
std::optional<Sighting3D> lift(const Detection2D& det, const DepthImage& depth,
                               const SubjectMask& mask, const CameraRecord& cam);

struct Clustering {
  /// Accepted clusters as indices into the input, each sorted ascending;
  /// clusters ordered by their first index.
  std::vector<std::vector<std::size_t>> clusters;
  /// Clusters smaller than the minimum size, same ordering.
  std::vector<std::vector<std::size_t>> rejected;
};

inline constexpr double kDefaultClusterThreshold = 0.02;
inline constexpr std::size_t kDefaultMinClusterSize = 3;

/// Bottom-up average-linkage agglomeration under Euclidean distance. Merging
/// stops once the closest pair of clusters is farther apart than
/// `distance_threshold`.
Clustering cluster_points(const std::vector<Vec3>& points, double distance_threshold,
                          std::size_t min_cluster_size = kDefaultMinClusterSize);

Clustering cluster(const std::vector<Sighting3D>& sightings, double distance_threshold,
                   std::size_t min_cluster_size = kDefaultMinClusterSize);

struct LesionMember {
  std::string image_id;
  int det_id = 0;
  friend bool operator==(const LesionMember&, const LesionMember&) = default;
};

struct GlobalLesion {
  int global_id = 0;
  Vec3 centroid = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
  std::vector<LesionMember> members;
  int nearest_vertex = -1;
};

/// Centroid per cluster, snapped to the nearest mesh vertex for its normal.
/// Ids are assigned by ascending centroid height, then azimuth atan2(x, z).
std::vector<GlobalLesion> build_registry(const std::vector<Sighting3D>& sightings,
                                         const std::vector<std::vector<std::size_t>>& clusters,
                                         const TriMesh& mesh);

struct LesionRegistry {
  std::vector<GlobalLesion> lesions;
  std::vector<std::vector<LesionMember>> rejected;
  std::vector<LesionMember> off_subject;
};

nlohmann::json registry_to_json(const LesionRegistry& registry);
LesionRegistry registry_from_json(const nlohmann::json& j);
LesionRegistry read_registry(const std::filesystem::path& path);
void write_registry(const std::filesystem::path& path, const LesionRegistry& registry);

}  // namespace slm
