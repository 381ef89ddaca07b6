#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "slm/camgeom.hpp"
#include "slm/mesh.hpp"

namespace testutil {

/// Fresh scratch directory for one test, under SLM_TEST_TMP or the system
/// temp directory.
inline std::filesystem::path scratch(const std::string& name) {
  const char* env = std::getenv("SLM_TEST_TMP");
  const std::filesystem::path base =
      env ? std::filesystem::path(env) : std::filesystem::temp_directory_path() / "slm_tests";
  const auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline slm::Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  slm::Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

/// Camera at `eye` looking at `target` with a square image.
inline slm::CameraRecord make_camera(const slm::Vec3& eye, const slm::Vec3& target, int size,
                                     double fov_px = 0.0) {
  slm::CameraRecord cam;
  cam.id = "cam";
  cam.intrinsics.width = cam.intrinsics.height = size;
  cam.intrinsics.fx = cam.intrinsics.fy = fov_px > 0 ? fov_px : size * 1.2;
  cam.intrinsics.cx = cam.intrinsics.cy = (size - 1) / 2.0;
  cam.world_from_camera = slm::look_at(eye, target);
  return cam;
}

/// Random triangle soup inside a cube of half-side `extent` around `center`.
inline slm::TriMesh random_soup(std::mt19937_64& rng, int triangles, const slm::Vec3& center,
                                double extent, double max_edge) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  slm::TriMesh mesh;
  for (int t = 0; t < triangles; ++t) {
    const slm::Vec3 c = center + extent * slm::Vec3(u(rng), u(rng), u(rng));
    const int base = static_cast<int>(mesh.vertices.size());
    for (int k = 0; k < 3; ++k) {
      mesh.vertices.push_back(c + max_edge * slm::Vec3(u(rng), u(rng), u(rng)));
    }
    mesh.faces.push_back({base, base + 1, base + 2});
  }
  return mesh;
}

}  // namespace testutil
