#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "slm/mesh.hpp"
#include "slm/render.hpp"

namespace slm {

/// {x : normal . x = offset}
struct Plane {
  Vec3 normal = Vec3::UnitY();
  double offset = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
  Vec3 project(const Vec3& p) const { return p - signed_distance(p) * normal; }
};

struct Circle3D {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
  Plane plane;
};

struct PlaneFit {
  Plane plane;
  std::size_t inliers = 0;
  double rms_residual = 0.0;  // over the consensus set
};

struct CircleFit {
  Circle3D circle;
  std::size_t candidates = 0;  // points within the band of the ground
  std::size_t inliers = 0;
  double rms_residual = 0.0;
};

inline constexpr int kDefaultRansacIterations = 1024;

/// RANSAC plane: 3-point hypotheses, inlier count within `inlier_tol`, then a
/// least-squares refit on the winning consensus set. The normal is oriented so
/// that most points off the consensus band lie on its positive side. Throws
/// FitError for fewer than 3 points or a collinear set.
PlaneFit fit_ground_plane(const std::vector<Vec3>& points, double inlier_tol,
                          int iterations = kDefaultRansacIterations, std::uint64_t seed = 0);

/// Projects points within `band` of `ground` onto it and fits a circle:
/// 3-point circumcircle RANSAC with tolerance band/2, then a Kasa algebraic
/// refit on the inliers.
CircleFit fit_stand_circle(const std::vector<Vec3>& points, const Plane& ground, double band,
                           std::uint64_t seed = 0,
                           int iterations = kDefaultRansacIterations);

/// Algebraic least-squares circle through 2D points (Kasa).
bool kasa_circle_fit(const std::vector<Vec2>& points, Vec2& center, double& radius);

struct Canonicalization {
  TriMesh mesh;
  Mat4 transform = Mat4::Identity();  // similarity: canonical = transform * raw
  double scale = 1.0;
  std::size_t cropped_vertices = 0;
  std::size_t cropped_faces = 0;
};

/// Similarity that maps the stand center to the origin, the ground normal to
/// +y and the stand to its physical diameter.
Mat4 canonical_transform(const Plane& ground, const Circle3D& stand, double stand_diameter_m);

/// Applies canonical_transform and crops vertices below y = 0 or outside the
/// capture cylinder, dropping faces that reference them and unreferenced
/// vertices.
Canonicalization canonicalize(const TriMesh& mesh, const Plane& ground, const Circle3D& stand,
                              double stand_diameter_m,
                              const CaptureCylinder& crop = CaptureCylinder{});

/// The camera pose expressed in the canonical frame.
CameraRecord transform_camera(const CameraRecord& cam, const Mat4& similarity);

nlohmann::json canonicalization_sidecar(const Canonicalization& result, const PlaneFit& ground,
                                        const CircleFit& stand, std::uint64_t seed);

struct HausdorffResult {
  double max = 0.0;
  double mean = 0.0;
  std::vector<double> per_sample;
};

/// Uniform area-weighted surface samples (seeded).
std::vector<Vec3> sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

/// One-sided sampled Hausdorff distance from A to B: n_samples points drawn
/// on A, exact point-to-triangle distance to B.
HausdorffResult hausdorff(const TriMesh& a, const TriMesh& b, std::size_t n_samples,
                          std::uint64_t seed = 0);

/// max of both one-sided distances; `mean` averages the two sample sets.
HausdorffResult hausdorff_symmetric(const TriMesh& a, const TriMesh& b, std::size_t n_samples,
                                    std::uint64_t seed = 0);

}  // namespace slm
