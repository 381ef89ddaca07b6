#include "slm/render.hpp"

#include <algorithm>
#include <cmath>

#include "slm/errors.hpp"

namespace slm {

void CaptureCylinder::validate() const {
  if (!(radius > 0.0)) throw ParameterError("capture cylinder: radius must be positive");
  if (!(y_max > y_min)) throw ParameterError("capture cylinder: y_max must exceed y_min");
}

namespace {

struct ClipVertex {
  Vec3 cam;  // camera-frame position
  Vec2 uv;
};

/// Sutherland-Hodgman against the plane z = near. Returns the vertex count
/// (0, 3 or 4).
int clip_near(const ClipVertex (&in)[3], double near, ClipVertex (&out)[4]) {
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const ClipVertex& a = in[i];
    const ClipVertex& b = in[(i + 1) % 3];
    const bool a_in = a.cam.z() >= near;
    const bool b_in = b.cam.z() >= near;
    if (a_in) out[n++] = a;
    if (a_in != b_in) {
      const double t = (near - a.cam.z()) / (b.cam.z() - a.cam.z());
      out[n++] = {a.cam + t * (b.cam - a.cam), a.uv + t * (b.uv - a.uv)};
    }
  }
  return n;
}

struct ScreenVertex {
  double x, y;
  double inv_z;
  Vec2 uv_over_z;
};

class TriangleRasterizer {
 public:
  TriangleRasterizer(const CameraRecord& cam, RenderOutput& out, const ColorImage* texture,
                     bool depth_only)
      : k_(cam.intrinsics), out_(out), texture_(texture), depth_only_(depth_only) {}

  void draw(const ClipVertex& a, const ClipVertex& b, const ClipVertex& c) {
    const ScreenVertex s[3] = {to_screen(a), to_screen(b), to_screen(c)};
    const double area = (s[1].x - s[0].x) * (s[2].y - s[0].y) - (s[2].x - s[0].x) * (s[1].y - s[0].y);
    if (!(std::abs(area) > 1e-14)) return;
    const double inv_area = 1.0 / area;

    const double min_x = std::min({s[0].x, s[1].x, s[2].x});
    const double max_x = std::max({s[0].x, s[1].x, s[2].x});
    const double min_y = std::min({s[0].y, s[1].y, s[2].y});
    const double max_y = std::max({s[0].y, s[1].y, s[2].y});
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x)));
    const int x1 = std::min(k_.width - 1, static_cast<int>(std::floor(max_x)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(min_y)));
    const int y1 = std::min(k_.height - 1, static_cast<int>(std::floor(max_y)));
    if (x0 > x1 || y0 > y1) return;

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        // Barycentric weights from edge functions at the pixel center.
        const double w0 = ((s[1].x - x) * (s[2].y - y) - (s[2].x - x) * (s[1].y - y)) * inv_area;
        const double w1 = ((s[2].x - x) * (s[0].y - y) - (s[0].x - x) * (s[2].y - y)) * inv_area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double inv_z = w0 * s[0].inv_z + w1 * s[1].inv_z + w2 * s[2].inv_z;
        const double z = 1.0 / inv_z;
        float& stored = out_.depth.at(x, y);
        if (!(z < stored)) continue;
        stored = static_cast<float>(z);
        if (!depth_only_) {
          const Vec2 uv = (w0 * s[0].uv_over_z + w1 * s[1].uv_over_z + w2 * s[2].uv_over_z) * z;
          out_.color.at(x, y) = texture_ ? sample_texture(*texture_, uv) : Rgb{200, 200, 200};
        }
      }
    }
  }

 private:
  ScreenVertex to_screen(const ClipVertex& v) const {
    const double inv_z = 1.0 / v.cam.z();
    return {k_.fx * v.cam.x() * inv_z + k_.cx, k_.fy * v.cam.y() * inv_z + k_.cy, inv_z,
            v.uv * inv_z};
  }

  const Intrinsics& k_;
  RenderOutput& out_;
  const ColorImage* texture_;
  bool depth_only_;
};

}  // namespace

RenderOutput rasterize(const TriMesh& mesh, const CameraRecord& cam, const RenderOptions& options) {
  if (mesh.empty()) throw ParameterError("rasterize: empty mesh");
  cam.validate();
  const auto& k = cam.intrinsics;
  RenderOutput out;
  out.depth = DepthImage(k.width, k.height, kBackgroundDepth);
  if (!options.depth_only) out.color = ColorImage(k.width, k.height, options.background);

  const Projector proj(cam);
  std::vector<Vec3> cam_vertices(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    cam_vertices[i] = proj.to_camera(mesh.vertices[i]);
  }
  const bool textured = mesh.textured();
  TriangleRasterizer raster(cam, out, textured ? &mesh.texture : nullptr, options.depth_only);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    ClipVertex in[3];
    for (int i = 0; i < 3; ++i) {
      in[i].cam = cam_vertices[tri[i]];
      in[i].uv = textured ? mesh.uvs[f][i] : Vec2::Zero();
    }
    if (in[0].cam.z() < options.near_plane && in[1].cam.z() < options.near_plane &&
        in[2].cam.z() < options.near_plane) {
      continue;
    }
    if ((in[1].cam - in[0].cam).cross(in[2].cam - in[0].cam).squaredNorm() == 0.0) continue;
    ClipVertex clipped[4];
    const int n = clip_near(in, options.near_plane, clipped);
    for (int i = 1; i + 1 < n; ++i) raster.draw(clipped[0], clipped[i], clipped[i + 1]);
  }
  return out;
}

SubjectMask subject_mask(const DepthImage& depth, const CameraRecord& cam,
                         const CaptureCylinder& cyl) {
  cyl.validate();
  SubjectMask mask(depth.width(), depth.height(), 0);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const float d = depth.at(x, y);
      if (!std::isfinite(d) || !(d > 0.0f)) continue;
      mask.at(x, y) = cyl.contains(unproject(Vec2(x, y), d, cam)) ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace slm
