#pragma once

#include <cstdint>
#include <vector>

#include "slm/mesh.hpp"

namespace slm {

struct PhantomParams {
  int around = 288;         // vertices per ring
  int along = 480;          // rings from sole to crown
  int texture_width = 1024;
  int texture_height = 2048;
  Rgb skin{224, 182, 158};
  int texture_noise = 2;    // +/- levels of seeded texel noise
  std::uint64_t seed = 7;
};

/// Standing human-like body of revolution with elliptical cross sections,
/// feet at y = 0, facing +z, roughly 1.73 m tall. Closed surface with
/// outward winding, per-corner UVs (u around the body, v up) and a plain
/// skin texture.
TriMesh make_phantom(const PhantomParams& params = {});

/// Constant-curvature forward bend (toward +z) of the body above `start_y`.
/// Points below are fixed, the band [start_y, start_y + length] bends
/// through `angle_rad`, and everything above moves rigidly.
struct BendParams {
  double start_y = 0.95;
  double length = 0.35;
  double angle_rad = 0.0;
};

Vec3 bend_point(const Vec3& p, const BendParams& params);
/// Bends vertices in place of a copy; faces, UVs and texture are shared, so
/// the vertex correspondence is the identity.
TriMesh bend_mesh(const TriMesh& mesh, const BendParams& params);

/// A point on a specific face, by barycentric weights.
struct SurfaceSample {
  int face = -1;
  Vec3 barycentric = Vec3::Zero();
  Vec3 point = Vec3::Zero();
};

struct LesionPlacement {
  int count = 20;
  double y_min = 0.35;
  double y_max = 1.35;
  double max_abs_normal_y = 0.3;  // keep to near-vertical skin
  double min_separation = 0.08;
  std::uint64_t seed = 11;
};

/// Area-weighted random surface samples honoring the placement limits.
/// Throws ParameterError if the count cannot be met.
std::vector<SurfaceSample> place_lesions(const TriMesh& mesh, const LesionPlacement& placement);

/// Same face and barycentric weights evaluated on another mesh with the same
/// topology.
SurfaceSample transfer_sample(const SurfaceSample& sample, const TriMesh& mesh);

}  // namespace slm
