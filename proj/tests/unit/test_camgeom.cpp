#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "slm/camgeom.hpp"
#include "slm/errors.hpp"
#include "slm/rigsim.hpp"
#include "unit/util.hpp"

using namespace slm;

TEST_CASE("intrinsics from the rig lens") {
  const Intrinsics k = intrinsics_from_rig(18.0, 22.3, 4000, 6000);
  CHECK(k.fx == doctest::Approx(18.0 / 22.3 * 4000.0).epsilon(1e-12));
  CHECK(k.fy == k.fx);
  CHECK(k.cx == 1999.5);
  CHECK(k.cy == 2999.5);
  CHECK_NOTHROW(k.validate());
  CHECK_THROWS_AS(intrinsics_from_rig(0.0, 22.3, 4000, 6000), ParameterError);
}

TEST_CASE("intrinsics validation") {
  Intrinsics k{100, 100, 50, 50, 100, 100};
  CHECK_NOTHROW(k.validate());
  k.fx = -1;
  CHECK_THROWS_AS(k.validate(), ParameterError);
  k.fx = 100;
  k.cx = 100;
  CHECK_THROWS_AS(k.validate(), ParameterError);
  k.cx = -0.1;
  CHECK_THROWS_AS(k.validate(), ParameterError);
}

TEST_CASE("scaled intrinsics keep pixel-center geometry") {
  const Intrinsics k = intrinsics_from_rig(18.0, 22.3, 4000, 6000);
  const Intrinsics q = k.scaled(0.25);
  CHECK(q.width == 1000);
  CHECK(q.height == 1500);
  CHECK(q.fx == doctest::Approx(k.fx / 4).epsilon(1e-12));
  CHECK(q.cx == doctest::Approx(499.5).epsilon(1e-12));
  CHECK(q.cy == doctest::Approx(749.5).epsilon(1e-12));
  // The image edge maps to the image edge: -0.5 -> -0.5.
  CHECK(((-0.5 - k.cx) / k.fx) == doctest::Approx((-0.5 - q.cx) / q.fx).epsilon(1e-12));
  CHECK_THROWS_AS(k.scaled(0.0), ParameterError);
}

TEST_CASE("look_at builds a proper rotation facing the target") {
  const Mat4 m = look_at(Vec3(0, 1, 2), Vec3(0, 1, 0));
  const Mat3 r = m.topLeftCorner<3, 3>();
  CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.determinant() == doctest::Approx(1.0));
  CHECK((r.col(2) - Vec3(0, 0, -1)).norm() < 1e-12);  // forward
  CHECK((r.col(0) - Vec3(1, 0, 0)).norm() < 1e-12);   // image right
  CHECK((r.col(1) - Vec3(0, -1, 0)).norm() < 1e-12);  // image down
  CHECK_THROWS_AS(look_at(Vec3(0, 0, 0), Vec3(0, 1, 0)), ParameterError);
}

TEST_CASE("project and unproject are inverse") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 20; ++c) {
    const auto cam = testutil::make_camera(2.0 * testutil::random_unit(rng), Vec3::Zero(), 640);
    for (int i = 0; i < 500; ++i) {
      const Vec2 px(u(rng) * 640 - 0.5, u(rng) * 640 - 0.5);
      const double depth = 0.1 + 5.0 * u(rng);
      const Projection p = project(unproject(px, depth, cam), cam);
      CHECK((p.pixel - px).norm() < 1e-9);
      CHECK(p.depth == doctest::Approx(depth).epsilon(1e-12));
    }
  }
}

TEST_CASE("principal point ray") {
  const auto cam = testutil::make_camera(Vec3(0, 0, 3), Vec3::Zero(), 101);
  const Projection p = project(Vec3::Zero(), cam);
  CHECK(p.pixel.x() == doctest::Approx(50.0));
  CHECK(p.pixel.y() == doctest::Approx(50.0));
  CHECK(p.depth == doctest::Approx(3.0));
  const Ray r = pixel_ray(cam, Vec2(50, 50));
  CHECK((r.direction - Vec3(0, 0, -1)).norm() < 1e-12);
  // A point above the axis appears in the upper half of the image.
  CHECK(project(Vec3(0, 0.5, 0), cam).pixel.y() < 50.0);
}

TEST_CASE("pixel rays pass through unprojected points") {
  std::mt19937_64 rng(5);
  const auto cam = testutil::make_camera(Vec3(1, 2, 3), Vec3(0, 1, 0), 200);
  std::uniform_real_distribution<double> u(0.0, 199.0);
  for (int i = 0; i < 100; ++i) {
    const Vec2 px(u(rng), u(rng));
    const Ray r = pixel_ray(cam, px);
    CHECK(r.direction.norm() == doctest::Approx(1.0));
    const Vec3 p = unproject(px, 2.5, cam);
    const Vec3 v = p - r.origin;
    CHECK((v - v.dot(r.direction) * r.direction).norm() < 1e-12);
  }
}

TEST_CASE("behind-camera and nonpositive depth errors") {
  const auto cam = testutil::make_camera(Vec3(0, 0, 3), Vec3::Zero(), 100);
  CHECK_THROWS_AS(project(Vec3(0, 0, 4), cam), BehindCameraError);
  CHECK_THROWS_AS(project(Vec3(0, 0, 3), cam), BehindCameraError);
  CHECK_THROWS_AS(unproject(Vec2(1, 1), 0.0, cam), ParameterError);
  CHECK_THROWS_AS(unproject(Vec2(1, 1), -1.0, cam), ParameterError);
}

TEST_CASE("projector matches project") {
  std::mt19937_64 rng(9);
  const auto cam = testutil::make_camera(Vec3(0.3, 1.1, 1.7), Vec3(0, 1, 0), 300);
  const Projector proj(cam);
  for (int i = 0; i < 100; ++i) {
    const Vec3 p = Vec3(0, 1, 0) + 0.3 * testutil::random_unit(rng);
    const Projection a = project(p, cam);
    CHECK((proj.to_pixel(proj.to_camera(p)) - a.pixel).norm() < 1e-9);
  }
}

TEST_CASE("camera validation") {
  auto cam = testutil::make_camera(Vec3(0, 0, 3), Vec3::Zero(), 100);
  CHECK_NOTHROW(cam.validate());
  cam.world_from_camera(0, 0) *= 1.001;
  CHECK_THROWS_AS(cam.validate(), ParameterError);
  cam = testutil::make_camera(Vec3(0, 0, 3), Vec3::Zero(), 100);
  cam.world_from_camera.col(0) *= -1.0;  // reflection
  CHECK_THROWS_AS(cam.validate(), ParameterError);
  cam = testutil::make_camera(Vec3(0, 0, 3), Vec3::Zero(), 100);
  cam.world_from_camera(3, 0) = 0.5;
  CHECK_THROWS_AS(cam.validate(), ParameterError);
}

TEST_CASE("cameras.json round trip") {
  const auto dir = testutil::scratch("camgeom_json");
  RigConfig cfg;
  cfg.resolution_scale = 0.25;
  std::vector<CameraRecord> cams;
  for (const auto& rc : generate_rig(cfg)) cams.push_back(rc.camera);
  write_cameras(dir / "cameras.json", cams);
  const auto back = read_cameras(dir / "cameras.json");
  REQUIRE(back.size() == cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK(back[i].id == cams[i].id);
    CHECK(back[i].image_path == cams[i].image_path);
    CHECK(back[i].intrinsics.fx == cams[i].intrinsics.fx);
    CHECK(back[i].intrinsics.cy == cams[i].intrinsics.cy);
    CHECK(back[i].world_from_camera == cams[i].world_from_camera);
  }
}

TEST_CASE("malformed cameras.json") {
  const auto dir = testutil::scratch("camgeom_bad");
  std::ofstream(dir / "a.json") << "{\"not\": \"an array\"}";
  CHECK_THROWS_AS(read_cameras(dir / "a.json"), FormatError);
  std::ofstream(dir / "b.json") << "[{\"id\": \"A1\", \"width\": 10}]";
  CHECK_THROWS_AS(read_cameras(dir / "b.json"), FormatError);
  CHECK_THROWS_AS(read_cameras(dir / "missing.json"), NotFoundError);
}
