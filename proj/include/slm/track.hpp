#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slm/fuse3d.hpp"
#include "slm/mesh.hpp"

namespace slm {

/// Euclidean-nearest vertex; ties go to the lowest index.
int snap_to_vertex(const Vec3& point, const TriMesh& mesh);

/// Undirected mesh edge graph weighted by Euclidean edge length (CSR).
class MeshGraph {
 public:
  explicit MeshGraph(const TriMesh& mesh);

  std::size_t size() const { return offsets_.size() - 1; }

  /// Dijkstra from `source`. With targets given, the search stops once all of
  /// them are settled and only their entries are meaningful. Unreachable
  /// vertices are +infinity.
  std::vector<double> distances(int source, const std::vector<int>& targets = {}) const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<int> neighbors_;
  std::vector<double> weights_;
};

/// Shortest edge-path lengths from `source` to each of `targets`, in order.
std::vector<double> geodesic(const TriMesh& mesh, int source, const std::vector<int>& targets);

struct CorrespondenceMap {
  std::string mesh_a_id;
  std::string mesh_b_id;
  std::vector<int> pairs;  // vertex i of A corresponds to vertex pairs[i] of B

  void validate(std::size_t vertices_a, std::size_t vertices_b) const;
};

CorrespondenceMap identity_correspondence(std::size_t n, const std::string& mesh_a_id,
                                          const std::string& mesh_b_id);
int transfer(int vertex_in_a, const CorrespondenceMap& corr);

void to_json(nlohmann::json& j, const CorrespondenceMap& corr);
void from_json(const nlohmann::json& j, CorrespondenceMap& corr);
CorrespondenceMap read_correspondence(const std::filesystem::path& path);
void write_correspondence(const std::filesystem::path& path, const CorrespondenceMap& corr);

struct LesionMatch {
  int lesion_t = -1;
  int lesion_t1 = -1;  // -1 when no partner was assigned
  double geodesic_residual = std::numeric_limits<double>::infinity();
  bool matched = false;

  friend bool operator==(const LesionMatch&, const LesionMatch&) = default;
};

inline constexpr double kDefaultMaxGeodesic = 0.05;

/// Minimum-cost one-to-one assignment on a rectangular cost matrix
/// (rows x cols, row-major). Returns the column chosen for each row, or -1
/// for rows left over when rows > cols.
std::vector<int> solve_assignment(const std::vector<double>& cost, std::size_t rows,
                                  std::size_t cols);

/// Transfers each scan-t lesion vertex through the correspondence, measures
/// geodesics on mesh_t1 to every scan-t+1 lesion vertex and solves the
/// optimal assignment. Assigned pairs with a residual above `max_geodesic`
/// are reported with matched = false. One entry per scan-t lesion, in
/// registry order.
std::vector<LesionMatch> match_lesions(const std::vector<GlobalLesion>& lesions_t,
                                       const std::vector<GlobalLesion>& lesions_t1,
                                       const CorrespondenceMap& corr, const TriMesh& mesh_t1,
                                       double max_geodesic = kDefaultMaxGeodesic);

/// Fraction of ground-truth pairs reproduced by matched predictions.
/// Throws UndefinedMetricError on an empty ground truth.
double longitudinal_accuracy(const std::vector<LesionMatch>& predicted,
                             const std::vector<LesionMatch>& ground_truth);

/// Labels each lesion with the id of the nearest reference lesion within
/// `tolerance` meters (one-to-one, closest pairs first).
std::map<int, int> label_lesions(const std::vector<GlobalLesion>& lesions,
                                 const std::vector<GlobalLesion>& reference, double tolerance);

/// Ground-truth pairs between two registries whose lesions carry the same
/// reference label.
std::vector<LesionMatch> truth_pairs(const std::map<int, int>& labels_t,
                                     const std::map<int, int>& labels_t1);

/// Registry recovered by fusion against the true lesion set.
struct FusionReport {
  std::size_t truth = 0;
  std::size_t recovered = 0;  // true lesions labeled by some global lesion
  std::size_t spurious = 0;   // global lesions without a label
  double max_centroid_error = 0.0;
  double mean_centroid_error = 0.0;
};

FusionReport evaluate_fusion(const std::vector<GlobalLesion>& lesions,
                             const std::vector<GlobalLesion>& truth, double tolerance);

struct TrackResult {
  std::vector<LesionMatch> pairs;
  std::optional<double> accuracy;
};

nlohmann::json tracks_to_json(const TrackResult& result);
TrackResult tracks_from_json(const nlohmann::json& j);
TrackResult read_tracks(const std::filesystem::path& path);
void write_tracks(const std::filesystem::path& path, const TrackResult& result);

}  // namespace slm
