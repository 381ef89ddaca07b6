#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "slm/types.hpp"

namespace slm {

/// Pinhole intrinsics in pixels. Pixel (0,0) addresses the center of the
/// top-left pixel.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;

  /// Intrinsics of the same lens on an image resampled by `factor`.
  Intrinsics scaled(double factor) const;
};

/// Converts a physical focal length to pixel units with a centered principal
/// point.
Intrinsics intrinsics_from_rig(double focal_mm, double sensor_width_mm, int width, int height);

/// One rig camera. The camera frame is x right, y down, z forward; depth is
/// the camera-frame z in meters.
struct CameraRecord {
  std::string id;
  Intrinsics intrinsics;
  Mat4 world_from_camera = Mat4::Identity();
  std::string image_path;

  Mat3 rotation() const { return world_from_camera.topLeftCorner<3, 3>(); }
  Vec3 center() const { return world_from_camera.topRightCorner<3, 1>(); }
  Vec3 view_axis() const { return rotation().col(2); }
  Vec3 to_camera(const Vec3& world) const { return rotation().transpose() * (world - center()); }
  Vec3 to_world(const Vec3& camera) const { return rotation() * camera + center(); }

  /// Throws ParameterError unless intrinsics are valid and the rotation is
  /// proper orthonormal within 1e-9.
  void validate() const;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

/// Projects a world point. Throws BehindCameraError when camera-frame z <= 0.
/// The pixel may fall outside the image.
Projection project(const Vec3& point_world, const CameraRecord& cam);

/// Exact right-inverse of project(). Throws ParameterError when depth <= 0.
Vec3 unproject(const Vec2& pixel, double depth, const CameraRecord& cam);

Ray pixel_ray(const CameraRecord& cam, const Vec2& pixel);

/// world_from_camera for a camera at `eye` looking at `target`, with image
/// rows running along -up.
Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY());

/// Fast repeated projection: caches the camera_from_world transform.
class Projector {
 public:
  explicit Projector(const CameraRecord& cam);
  Vec3 to_camera(const Vec3& world) const { return rot_t_ * world + trans_; }
  Vec2 to_pixel(const Vec3& camera_point) const {
    return {fx_ * camera_point.x() / camera_point.z() + cx_,
            fy_ * camera_point.y() / camera_point.z() + cy_};
  }

 private:
  Mat3 rot_t_;
  Vec3 trans_;
  double fx_, fy_, cx_, cy_;
};

void to_json(nlohmann::json& j, const CameraRecord& cam);
void from_json(const nlohmann::json& j, CameraRecord& cam);

std::vector<CameraRecord> read_cameras(const std::filesystem::path& path);
void write_cameras(const std::filesystem::path& path, const std::vector<CameraRecord>& cams);

}  // namespace slm
