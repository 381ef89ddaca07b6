#pragma once

#include "slm/camgeom.hpp"
#include "slm/image.hpp"
#include "slm/mesh.hpp"

namespace slm {

/// Vertical cylinder around the rig axis; geometry inside belongs to the
/// subject.
struct CaptureCylinder {
  Vec2 center_xz = Vec2::Zero();
  double radius = 0.8;
  double y_min = 0.0;
  double y_max = 2.2;

  void validate() const;
  bool contains(const Vec3& p) const {
    const double dx = p.x() - center_xz.x();
    const double dz = p.z() - center_xz.y();
    return dx * dx + dz * dz <= radius * radius && p.y() >= y_min && p.y() <= y_max;
  }
};

struct RenderOutput {
  ColorImage color;
  DepthImage depth;
};

struct RenderOptions {
  /// Near clipping distance in meters; geometry closer than this is clipped.
  double near_plane = 1e-3;
  Rgb background{0, 0, 0};
  /// Skip the color pass (depth only).
  bool depth_only = false;
};

/// Z-buffered perspective rasterization with perspective-correct attributes,
/// no back-face culling and flat ambient shading (color = nearest texel).
/// Depth holds the camera-frame z of the nearest surface; uncovered pixels
/// are kBackgroundDepth. Zero-area triangles are skipped. Untextured meshes
/// render as gray (200, 200, 200).
RenderOutput rasterize(const TriMesh& mesh, const CameraRecord& cam,
                       const RenderOptions& options = {});

/// mask(p) is set iff depth(p) is finite and its unprojected point lies
/// inside the cylinder.
SubjectMask subject_mask(const DepthImage& depth, const CameraRecord& cam,
                         const CaptureCylinder& cyl);

}  // namespace slm
