#include "slm/camgeom.hpp"

#include <cmath>
#include <sstream>

#include "slm/errors.hpp"
#include "slm/fileio.hpp"

namespace slm {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ParameterError("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ParameterError("intrinsics: image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw ParameterError("intrinsics: principal point outside the image");
  }
}

Intrinsics Intrinsics::scaled(double factor) const {
  if (!(factor > 0.0)) {
    throw ParameterError("intrinsics: scale factor must be positive");
  }
  Intrinsics out;
  out.width = std::max(1, static_cast<int>(std::lround(width * factor)));
  out.height = std::max(1, static_cast<int>(std::lround(height * factor)));
  const double sx = static_cast<double>(out.width) / width;
  const double sy = static_cast<double>(out.height) / height;
  out.fx = fx * sx;
  out.fy = fy * sy;
  // Pixel centers sit at integers, so the continuous image edge is at -0.5.
  out.cx = (cx + 0.5) * sx - 0.5;
  out.cy = (cy + 0.5) * sy - 0.5;
  return out;
}

Intrinsics intrinsics_from_rig(double focal_mm, double sensor_width_mm, int width, int height) {
  if (!(focal_mm > 0.0) || !(sensor_width_mm > 0.0) || width <= 0 || height <= 0) {
    throw ParameterError("intrinsics_from_rig: all inputs must be positive");
  }
  Intrinsics k;
  k.fx = k.fy = focal_mm / sensor_width_mm * width;
  k.cx = (width - 1) / 2.0;
  k.cy = (height - 1) / 2.0;
  k.width = width;
  k.height = height;
  return k;
}

void CameraRecord::validate() const {
  intrinsics.validate();
  const Mat3 r = rotation();
  if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ParameterError("camera " + id + ": rotation is not orthonormal");
  }
  if (std::abs(r.determinant() - 1.0) > 1e-9) {
    throw ParameterError("camera " + id + ": rotation determinant is not +1");
  }
  if (world_from_camera.row(3) != Eigen::RowVector4d(0, 0, 0, 1)) {
    throw ParameterError("camera " + id + ": pose is not a rigid transform");
  }
}

Projection project(const Vec3& point_world, const CameraRecord& cam) {
  const Vec3 c = cam.to_camera(point_world);
  if (!(c.z() > 0.0)) {
    throw BehindCameraError("project: point is behind camera " + cam.id);
  }
  const auto& k = cam.intrinsics;
  return {Vec2(k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy), c.z()};
}

Vec3 unproject(const Vec2& pixel, double depth, const CameraRecord& cam) {
  if (!(depth > 0.0)) {
    throw ParameterError("unproject: depth must be positive");
  }
  const auto& k = cam.intrinsics;
  const Vec3 c((pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth);
  return cam.to_world(c);
}

Ray pixel_ray(const CameraRecord& cam, const Vec2& pixel) {
  const auto& k = cam.intrinsics;
  const Vec3 dir_cam((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
  return {cam.center(), (cam.rotation() * dir_cam).normalized()};
}

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) {
    throw ParameterError("look_at: view direction is parallel to up");
  }
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 0) = right;
  m.block<3, 1>(0, 1) = down;
  m.block<3, 1>(0, 2) = forward;
  m.block<3, 1>(0, 3) = eye;
  return m;
}

Projector::Projector(const CameraRecord& cam)
    : rot_t_(cam.rotation().transpose()),
      trans_(-(cam.rotation().transpose() * cam.center())),
      fx_(cam.intrinsics.fx),
      fy_(cam.intrinsics.fy),
      cx_(cam.intrinsics.cx),
      cy_(cam.intrinsics.cy) {}

void to_json(nlohmann::json& j, const CameraRecord& cam) {
  std::vector<double> m(16);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m[r * 4 + c] = cam.world_from_camera(r, c);
  }
  j = nlohmann::json{{"id", cam.id},
                     {"width", cam.intrinsics.width},
                     {"height", cam.intrinsics.height},
                     {"fx", cam.intrinsics.fx},
                     {"fy", cam.intrinsics.fy},
                     {"cx", cam.intrinsics.cx},
                     {"cy", cam.intrinsics.cy},
                     {"world_from_camera", m},
                     {"image", cam.image_path}};
}

void from_json(const nlohmann::json& j, CameraRecord& cam) {
  try {
    cam.id = j.at("id").get<std::string>();
    cam.intrinsics.width = j.at("width").get<int>();
    cam.intrinsics.height = j.at("height").get<int>();
    cam.intrinsics.fx = j.at("fx").get<double>();
    cam.intrinsics.fy = j.at("fy").get<double>();
    cam.intrinsics.cx = j.at("cx").get<double>();
    cam.intrinsics.cy = j.at("cy").get<double>();
    const auto m = j.at("world_from_camera").get<std::vector<double>>();
    if (m.size() != 16) throw FormatError("world_from_camera must hold 16 numbers");
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) cam.world_from_camera(r, c) = m[r * 4 + c];
    }
    cam.image_path = j.value("image", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("camera record: ") + e.what());
  }
}

std::vector<CameraRecord> read_cameras(const std::filesystem::path& path) {
  const auto j = read_json(path);
  if (!j.is_array()) throw FormatError(path.string() + ": expected an array of cameras");
  std::vector<CameraRecord> cams;
  cams.reserve(j.size());
  for (const auto& item : j) {
    cams.push_back(item.get<CameraRecord>());
    cams.back().validate();
  }
  return cams;
}

void write_cameras(const std::filesystem::path& path, const std::vector<CameraRecord>& cams) {
  write_json(path, nlohmann::json(cams));
}

}  // namespace slm
