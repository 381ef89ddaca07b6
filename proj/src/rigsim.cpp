#include "slm/rigsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <mutex>
#include <numbers>
#include <random>
#include <set>

#include "slm/errors.hpp"
#include "slm/fileio.hpp"
#include "slm/fuse3d.hpp"
#include "slm/parallel.hpp"
#include "slm/session.hpp"
#include "slm/spatial.hpp"

namespace slm {

void RigConfig::validate() const {
  if (n_poles < 3) throw ParameterError("rig: need at least 3 poles");
  if (!(radius_m > 0.0)) throw ParameterError("rig: radius must be positive");
  if (heights_m.empty()) throw ParameterError("rig: no camera heights");
  for (std::size_t i = 1; i < heights_m.size(); ++i) {
    if (!(heights_m[i] > heights_m[i - 1])) {
      throw ParameterError("rig: heights must be strictly increasing");
    }
  }
  if (!look_at_heights_m.empty() && look_at_heights_m.size() != heights_m.size()) {
    throw ParameterError("rig: one look-at height per camera height is required");
  }
  if (image_width <= 0 || image_height <= 0) throw ParameterError("rig: image size must be positive");
  if (!(focal_mm > 0.0) || !(sensor_width_mm > 0.0)) {
    throw ParameterError("rig: focal length and sensor width must be positive");
  }
  if (!(resolution_scale > 0.0)) throw ParameterError("rig: resolution scale must be positive");
}

void to_json(nlohmann::json& j, const RigConfig& cfg) {
  j = {{"n_poles", cfg.n_poles},
       {"heights_m", cfg.heights_m},
       {"radius_m", cfg.radius_m},
       {"image_width", cfg.image_width},
       {"image_height", cfg.image_height},
       {"focal_mm", cfg.focal_mm},
       {"sensor_width_mm", cfg.sensor_width_mm},
       {"look_at_heights_m", cfg.look_at_heights_m},
       {"resolution_scale", cfg.resolution_scale}};
}

void from_json(const nlohmann::json& j, RigConfig& cfg) {
  const RigConfig d;
  try {
    cfg.n_poles = j.value("n_poles", d.n_poles);
    cfg.heights_m = j.value("heights_m", d.heights_m);
    cfg.radius_m = j.value("radius_m", d.radius_m);
    cfg.image_width = j.value("image_width", d.image_width);
    cfg.image_height = j.value("image_height", d.image_height);
    cfg.focal_mm = j.value("focal_mm", d.focal_mm);
    cfg.sensor_width_mm = j.value("sensor_width_mm", d.sensor_width_mm);
    cfg.look_at_heights_m = j.value("look_at_heights_m", d.look_at_heights_m);
    cfg.resolution_scale = j.value("resolution_scale", d.resolution_scale);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("rig config: ") + e.what());
  }
}

std::string pole_letter(int k) {
  if (k < 0) throw ParameterError("pole index must be non-negative");
  std::string out;
  for (int n = k + 1; n > 0; n = (n - 1) / 26) {
    out.insert(out.begin(), static_cast<char>('A' + (n - 1) % 26));
  }
  return out;
}

std::vector<RigCamera> generate_rig(const RigConfig& cfg) {
  cfg.validate();
  const Intrinsics k = intrinsics_from_rig(cfg.focal_mm, cfg.sensor_width_mm, cfg.image_width,
                                           cfg.image_height)
                           .scaled(cfg.resolution_scale);
  std::vector<RigCamera> out;
  for (int p = 0; p < cfg.n_poles; ++p) {
    const double azimuth = 2.0 * std::numbers::pi * p / cfg.n_poles;
    for (std::size_t h = 0; h < cfg.heights_m.size(); ++h) {
      const double y = cfg.heights_m[h];
      const double aim = cfg.look_at_heights_m.empty() ? y : cfg.look_at_heights_m[h];
      RigCamera rc;
      rc.pole = pole_letter(p);
      rc.height_index = static_cast<int>(h) + 1;
      rc.camera.id = rc.pole + std::to_string(rc.height_index);
      rc.camera.intrinsics = k;
      const Vec3 eye(cfg.radius_m * std::sin(azimuth), y, cfg.radius_m * std::cos(azimuth));
      rc.camera.world_from_camera = look_at(eye, Vec3(0.0, aim, 0.0));
      rc.camera.image_path = paths::image(rc.camera.id);
      out.push_back(std::move(rc));
    }
  }
  return out;
}

std::vector<std::string> front_view_poles() { return {"C", "B", "A", "O", "N"}; }

PaintedLesions paint_lesions(TriMesh& mesh, const std::vector<SyntheticLesionSpec>& lesions) {
  PaintedLesions painted;
  if (lesions.empty()) return painted;
  if (!mesh.textured()) throw ParameterError("paint_lesions: mesh has no texture");
  const MeshBvh bvh(mesh);
  std::vector<std::vector<int>> faces_of(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int v : mesh.faces[f]) faces_of[v].push_back(static_cast<int>(f));
  }
  const int tw = mesh.texture.width(), th = mesh.texture.height();
  for (const auto& lesion : lesions) {
    if (!(lesion.diameter_mm > 0.0)) throw ParameterError("paint_lesions: diameter must be positive");
    const auto hit = bvh.closest(lesion.surface_point);
    if (hit.distance > 1e-3) {
      throw ParameterError("paint_lesions: lesion " + std::to_string(lesion.id) +
                           " is not on the surface");
    }
    const double radius = lesion.diameter_mm / 2000.0;
    auto& points = painted[lesion.id];
    std::set<std::size_t> texels;
    std::vector<char> seen(mesh.faces.size(), 0);
    std::deque<int> queue{hit.face};
    seen[hit.face] = 1;
    while (!queue.empty()) {
      const int f = queue.front();
      queue.pop_front();
      const Vec3 a = mesh.corner(f, 0), b = mesh.corner(f, 1), c = mesh.corner(f, 2);
      if ((closest_point_on_triangle(lesion.surface_point, a, b, c).point - lesion.surface_point)
              .norm() > radius) {
        continue;
      }
      for (int v : mesh.faces[f]) {
        for (int g : faces_of[v]) {
          if (!seen[g]) {
            seen[g] = 1;
            queue.push_back(g);
          }
        }
      }
      const auto& uv = mesh.uvs[f];
      const Vec2 e1 = uv[1] - uv[0], e2 = uv[2] - uv[0];
      const double det = e1.x() * e2.y() - e1.y() * e2.x();
      if (std::abs(det) < 1e-18) continue;
      const double umin = std::min({uv[0].x(), uv[1].x(), uv[2].x()});
      const double umax = std::max({uv[0].x(), uv[1].x(), uv[2].x()});
      const double vmin = std::min({uv[0].y(), uv[1].y(), uv[2].y()});
      const double vmax = std::max({uv[0].y(), uv[1].y(), uv[2].y()});
      const int tx0 = std::max(0, static_cast<int>(std::floor(umin * tw)));
      const int tx1 = std::min(tw - 1, static_cast<int>(std::floor(umax * tw)));
      const int ty0 = std::max(0, static_cast<int>(std::floor((1.0 - vmax) * th)));
      const int ty1 = std::min(th - 1, static_cast<int>(std::floor((1.0 - vmin) * th)));
      for (int ty = ty0; ty <= ty1; ++ty) {
        for (int tx = tx0; tx <= tx1; ++tx) {
          const Vec2 d = texel_to_uv(tx, ty, tw, th) - uv[0];
          const double w1 = (d.x() * e2.y() - d.y() * e2.x()) / det;
          const double w2 = (e1.x() * d.y() - e1.y() * d.x()) / det;
          const double w0 = 1.0 - w1 - w2;
          if (w0 < -1e-9 || w1 < -1e-9 || w2 < -1e-9) continue;
          const Vec3 p = w0 * a + w1 * b + w2 * c;
          if ((p - lesion.surface_point).norm() > radius) continue;
          const std::size_t key = static_cast<std::size_t>(ty) * tw + tx;
          if (!texels.insert(key).second) continue;
          mesh.texture.at(tx, ty) = lesion.color;
          points.push_back(p);
        }
      }
    }
  }
  return painted;
}

std::optional<BBox> ground_truth_box(const SyntheticLesionSpec& lesion,
                                     const std::vector<Vec3>& painted, const CameraRecord& cam,
                                     const DepthImage& depth, const VisibilityParams& params,
                                     double resolution_scale) {
  const Projector proj(cam);
  const auto visible = [&](const Vec3& p, Vec2& pixel) {
    const Vec3 pc = proj.to_camera(p);
    if (pc.z() <= 0.0) return false;
    pixel = proj.to_pixel(pc);
    const int x = static_cast<int>(std::floor(pixel.x() + 0.5));
    const int y = static_cast<int>(std::floor(pixel.y() + 0.5));
    if (!depth.contains(x, y)) return false;
    return std::abs(static_cast<double>(depth.at(x, y)) - pc.z()) <= params.depth_tolerance_m;
  };
  Vec2 center;
  if (!visible(lesion.surface_point, center)) return std::nullopt;
  double x0 = center.x(), x1 = center.x(), y0 = center.y(), y1 = center.y();
  for (const auto& p : painted) {
    Vec2 px;
    if (!visible(p, px)) continue;
    x0 = std::min(x0, px.x());
    x1 = std::max(x1, px.x());
    y0 = std::min(y0, px.y());
    y1 = std::max(y1, px.y());
  }
  // Half a pixel of padding: the points are texel centers, the box covers
  // the pixels they land in.
  BBox box{x0 - 0.5, y0 - 0.5, x1 - x0 + 1.0, y1 - y0 + 1.0};
  box = clamp_to_image(box, depth.width(), depth.height());
  const double floor_px = params.min_box_px * resolution_scale;
  if (box.w <= 0.0 || box.h <= 0.0 || box.area() < floor_px * floor_px) return std::nullopt;
  return box;
}

void synthesize_session(const std::filesystem::path& dir, const TriMesh& mesh,
                        const RigConfig& cfg, const std::vector<SyntheticLesionSpec>& lesions,
                        const SynthesisOptions& options) {
  cfg.validate();
  options.cylinder.validate();
  std::set<int> ids;
  for (const auto& l : lesions) {
    if (!ids.insert(l.id).second) throw ParameterError("synthesize_session: duplicate lesion id");
  }
  TriMesh painted_mesh = mesh;
  if (painted_mesh.vertex_normals.size() != painted_mesh.vertices.size()) {
    painted_mesh.compute_normals();
  }
  const PaintedLesions painted = paint_lesions(painted_mesh, lesions);
  const auto rig = generate_rig(cfg);

  std::filesystem::create_directories(dir);
  write_obj(dir / "mesh/body.obj", painted_mesh);
  std::vector<CameraRecord> cameras;
  for (const auto& rc : rig) cameras.push_back(rc.camera);
  write_cameras(dir / "cameras.json", cameras);

  DetectionSet gt;
  for (const auto& rc : rig) gt[rc.camera.id];
  std::mutex gt_mutex;
  parallel_for(rig.size(), [&](std::size_t i) {
    const auto& cam = rig[i].camera;
    const RenderOutput out = rasterize(painted_mesh, cam);
    const SubjectMask mask = subject_mask(out.depth, cam, options.cylinder);
    write_png(dir / paths::image(cam.id), out.color);
    write_pfm(dir / paths::depth(cam.id), out.depth);
    write_png(dir / paths::mask(cam.id), mask);
    std::vector<Detection2D> boxes;
    for (const auto& lesion : lesions) {
      const auto box = ground_truth_box(lesion, painted.at(lesion.id), cam, out.depth,
                                        options.visibility, cfg.resolution_scale);
      if (!box) continue;
      boxes.push_back({cam.id, lesion.id, *box, 1.0, DetectionSource::ground_truth, false, ""});
    }
    const std::lock_guard lock(gt_mutex);
    gt[cam.id] = std::move(boxes);
  });
  write_detections(dir / paths::kGtDetections, gt);

  LesionRegistry truth;
  const VertexIndex index(painted_mesh.vertices);
  for (const auto& lesion : lesions) {
    GlobalLesion g;
    g.global_id = lesion.id;
    g.centroid = lesion.surface_point;
    g.nearest_vertex = index.nearest(lesion.surface_point);
    g.normal = painted_mesh.vertex_normals[g.nearest_vertex];
    for (const auto& [image_id, dets] : gt) {
      for (const auto& d : dets) {
        if (d.det_id == lesion.id) g.members.push_back({image_id, d.det_id});
      }
    }
    truth.lesions.push_back(std::move(g));
  }
  write_registry(dir / paths::kGtLesions, truth);

  SessionManifest m;
  m.session_id = options.session_id.empty() ? dir.filename().string() : options.session_id;
  m.subject_id = options.subject_id;
  m.captured_at = options.captured_at;
  m.resolution_scale = cfg.resolution_scale;
  m.seed = options.seed;
  for (const auto& rc : rig) {
    m.images.push_back({rc.camera.id, rc.pole, rc.height_index, paths::image(rc.camera.id)});
  }
  nlohmann::json rig_json = cfg;
  nlohmann::json lesion_json = nlohmann::json::array();
  for (const auto& l : lesions) {
    lesion_json.push_back({{"id", l.id},
                           {"surface_point", {l.surface_point.x(), l.surface_point.y(),
                                              l.surface_point.z()}},
                           {"diameter_mm", l.diameter_mm},
                           {"color", {l.color.r, l.color.g, l.color.b}}});
  }
  m.synthesis = {{"rig", rig_json}, {"lesions", lesion_json}};
  save_manifest(dir, m);
}

TriMesh phantom_mesh(const PhantomSessionSpec& spec) {
  PhantomParams params = spec.phantom;
  params.seed = spec.seed;
  TriMesh mesh = make_phantom(params);
  if (spec.bend_deg != 0.0) {
    BendParams bend;
    bend.angle_rad = spec.bend_deg * std::numbers::pi / 180.0;
    mesh = bend_mesh(mesh, bend);
  }
  return mesh;
}

std::vector<SyntheticLesionSpec> phantom_lesions(const PhantomSessionSpec& spec) {
  PhantomSessionSpec upright = spec;
  upright.bend_deg = 0.0;
  const TriMesh base = phantom_mesh(upright);
  const TriMesh posed = phantom_mesh(spec);
  LesionPlacement placement = spec.placement;
  placement.count = spec.lesion_count;
  placement.seed = spec.seed;
  std::vector<SyntheticLesionSpec> out;
  int id = 1;
  for (const auto& sample : place_lesions(base, placement)) {
    SyntheticLesionSpec l;
    l.id = id++;
    l.surface_point = transfer_sample(sample, posed).point;
    l.diameter_mm = spec.diameter_mm;
    out.push_back(l);
  }
  return out;
}

void synthesize_phantom_session(const std::filesystem::path& dir, const PhantomSessionSpec& spec) {
  SynthesisOptions options;
  options.session_id = spec.session_id;
  options.subject_id = spec.subject_id;
  options.captured_at = spec.captured_at;
  options.seed = spec.seed;
  synthesize_session(dir, phantom_mesh(spec), spec.rig, phantom_lesions(spec), options);
}

CorrespondenceMap perturb_correspondence(const CorrespondenceMap& truth, const TriMesh& mesh_b,
                                         double sigma_m, std::uint64_t seed) {
  if (!(sigma_m >= 0.0)) throw ParameterError("perturb_correspondence: sigma must be >= 0");
  CorrespondenceMap out = truth;
  if (sigma_m == 0.0) return out;
  const VertexIndex index(mesh_b.vertices);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma_m);
  for (auto& p : out.pairs) {
    const Vec3 offset(noise(rng), noise(rng), noise(rng));
    p = index.nearest(mesh_b.vertices.at(p) + offset);
  }
  return out;
}

}  // namespace slm
