#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles/oracles.hpp"
#include "slm/errors.hpp"
#include "slm/fileio.hpp"
#include "slm/fuse3d.hpp"
#include "slm/render.hpp"
#include "unit/util.hpp"

using namespace slm;

namespace {

Detection2D box(double x, double y, double w, double h) {
  Detection2D d;
  d.image_id = "img";
  d.bbox = {x, y, w, h};
  d.score = 1.0;
  return d;
}

// Flat wall at z = 0 seen head-on from z = 2.
struct Wall {
  CameraRecord cam = testutil::make_camera(Vec3(0, 0, 2), Vec3::Zero(), 64);
  DepthImage depth = DepthImage(64, 64, 2.0f);
  SubjectMask mask = SubjectMask(64, 64, 1);
};

std::vector<std::vector<std::size_t>> partition(const Clustering& c) {
  auto all = c.clusters;
  all.insert(all.end(), c.rejected.begin(), c.rejected.end());
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<Vec3> blobs(std::mt19937_64& rng, int groups, double spread, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  std::uniform_int_distribution<int> count(1, 6);
  std::normal_distribution<double> n(0.0, spread);
  std::vector<Vec3> pts;
  for (int g = 0; g < groups; ++g) {
    const Vec3 c(u(rng), u(rng), u(rng));
    const int k = count(rng);
    for (int i = 0; i < k; ++i) pts.push_back(c + Vec3(n(rng), n(rng), n(rng)));
  }
  return pts;
}

}  // namespace

TEST_CASE("lift at the box center") {
  Wall w;
  Detection2D d = box(20.25, 30.5, 6, 6);
  d.det_id = 4;
  const auto s = lift(d, w.depth, w.mask, w.cam);
  REQUIRE(s.has_value());
  CHECK(s->lift_status == LiftStatus::center_hit);
  CHECK(s->det_id == 4);
  CHECK(s->image_id == "img");
  CHECK(std::abs(s->point.z()) < 1e-12);
  const Vec2 back = project(s->point, w.cam).pixel;
  CHECK((back - Vec2(23.25, 33.5)).norm() < 1e-9);
}

TEST_CASE("lift falls back to the nearest masked pixel") {
  Wall w;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 30; ++x) w.mask.at(x, y) = 0;
  }
  const auto s = lift(box(25, 10, 8, 4), w.depth, w.mask, w.cam);
  REQUIRE(s.has_value());
  CHECK(s->lift_status == LiftStatus::fallback_hit);
  const Vec2 px = project(s->point, w.cam).pixel;
  CHECK((px - Vec2(30, 12)).norm() < 1e-9);
  CHECK_FALSE(lift(box(2, 2, 10, 10), w.depth, w.mask, w.cam).has_value());
  CHECK_FALSE(lift(box(100, 100, 10, 10), w.depth, w.mask, w.cam).has_value());
  CHECK_THROWS_AS(lift(box(2, 2, 10, 10), w.depth, SubjectMask(3, 3), w.cam), ParameterError);
}

TEST_CASE("lift agrees with an exhaustive scan") {
  Wall w;
  std::mt19937_64 rng(43);
  std::bernoulli_distribution on(0.15);
  std::uniform_real_distribution<double> pos(-3, 60), size(0.5, 20);
  std::uniform_real_distribution<float> dep(1.0f, 3.0f);
  for (int trial = 0; trial < 400; ++trial) {
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        w.mask.at(x, y) = on(rng);
        w.depth.at(x, y) = on(rng) && on(rng) ? kBackgroundDepth : dep(rng);
      }
    }
    const Detection2D d = box(pos(rng), pos(rng), size(rng), size(rng));
    const auto got = lift(d, w.depth, w.mask, w.cam);

    const double cx = d.bbox.cx(), cy = d.bbox.cy();
    const auto usable = [&](int x, int y) {
      return x >= 0 && y >= 0 && x < 64 && y < 64 && w.mask.at(x, y) && std::isfinite(w.depth.at(x, y));
    };
    const int px = static_cast<int>(std::floor(cx + 0.5)), py = static_cast<int>(std::floor(cy + 0.5));
    std::optional<Vec3> want;
    if (usable(px, py)) {
      want = unproject(Vec2(cx, cy), w.depth.at(px, py), w.cam);
    } else {
      double best = oracle::kInf;
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          const bool inside = x >= d.bbox.x && x <= d.bbox.x + d.bbox.w && y >= d.bbox.y && y <= d.bbox.y + d.bbox.h;
          if (!inside || !usable(x, y)) continue;
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          if (d2 < best) {  // row-major scan keeps the first of equal ones
            best = d2;
            want = unproject(Vec2(x, y), w.depth.at(x, y), w.cam);
          }
        }
      }
    }
    REQUIRE(got.has_value() == want.has_value());
    if (got) CHECK((got->point - *want).norm() < 1e-12);
  }
}

TEST_CASE("clustering examples") {
  std::vector<Vec3> pts = {{0, 0, 0}, {0.005, 0, 0}, {0, 0.005, 0},      // group a
                           {0.1, 0, 0}, {0.105, 0, 0}, {0.1, 0.004, 0},  // group b
                           {0.5, 0.5, 0.5}};
  auto c = cluster_points(pts, 0.02);
  REQUIRE(c.clusters.size() == 2);
  CHECK(c.clusters[0] == std::vector<std::size_t>{0, 1, 2});
  CHECK(c.clusters[1] == std::vector<std::size_t>{3, 4, 5});
  REQUIRE(c.rejected.size() == 1);
  CHECK(c.rejected[0] == std::vector<std::size_t>{6});

  c = cluster_points(pts, 0.5);
  CHECK(c.clusters.size() == 1);
  CHECK(c.clusters[0].size() == 6);

  c = cluster_points(pts, 0.02, 4);
  CHECK(c.clusters.empty());
  CHECK(c.rejected.size() == 3);

  CHECK(cluster_points({}, 0.02).clusters.empty());
  CHECK_THROWS_AS(cluster_points(pts, 0.0), ParameterError);
}

TEST_CASE("merge at exactly the threshold") {
  const std::vector<Vec3> pts = {{0, 0, 0}, {0.25, 0, 0}};
  CHECK(cluster_points(pts, 0.25, 1).clusters.size() == 1);
  CHECK(cluster_points(pts, 0.2499, 1).clusters.size() == 2);
}

TEST_CASE("clustering agrees with naive agglomeration") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> thr(0.005, 0.06);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = blobs(rng, 6, 0.01, 0.1);
    const double t = thr(rng);
    const auto c = cluster_points(pts, t, 1);
    CHECK(c.rejected.empty());
    CHECK(partition(c) == oracle::average_linkage(pts, t));
  }
}

TEST_CASE("clustering is invariant to input order") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pts = blobs(rng, 8, 0.008, 0.2);
    std::vector<std::size_t> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Vec3> shuffled(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) shuffled[i] = pts[perm[i]];
    auto a = partition(cluster_points(pts, 0.02, 1));
    auto b = partition(cluster_points(shuffled, 0.02, 1));
    for (auto& g : b) {
      for (auto& i : g) i = perm[i];
      std::sort(g.begin(), g.end());
    }
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("raising the minimum size only moves clusters to rejected") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pts = blobs(rng, 10, 0.006, 0.3);
    std::size_t last = std::numeric_limits<std::size_t>::max();
    const auto all = partition(cluster_points(pts, 0.02, 1));
    for (std::size_t m = 1; m <= 7; ++m) {
      const auto c = cluster_points(pts, 0.02, m);
      CHECK(c.clusters.size() <= last);
      last = c.clusters.size();
      CHECK(partition(c) == all);
      for (const auto& g : c.clusters) CHECK(g.size() >= m);
      for (const auto& g : c.rejected) CHECK(g.size() < m);
    }
  }
}

TEST_CASE("registry centroids, normals and ids") {
  const TriMesh sphere = make_icosphere(4, 0.5);
  std::mt19937_64 rng(67);
  std::normal_distribution<double> n(0.0, 0.002);
  std::vector<Sighting3D> sightings;
  std::vector<std::vector<std::size_t>> clusters;
  const std::vector<Vec3> dirs = {Vec3(0, 0.3, 1).normalized(), Vec3(1, -0.5, 0).normalized(),
                                  Vec3(-1, -0.5, 0).normalized()};
  for (std::size_t c = 0; c < dirs.size(); ++c) {
    std::vector<std::size_t> members;
    for (int k = 0; k < 4; ++k) {
      members.push_back(sightings.size());
      sightings.push_back({"img" + std::to_string(3 - k), static_cast<int>(c * 10 + k),
                           0.5 * dirs[c] + Vec3(n(rng), 0.0, n(rng)), LiftStatus::center_hit});
    }
    clusters.push_back(members);
  }
  const auto reg = build_registry(sightings, clusters, sphere);
  REQUIRE(reg.size() == 3);
  // Two lesions share a height; azimuth atan2(x, z) orders -x before +x.
  CHECK(reg[0].centroid.x() < 0);
  CHECK(reg[1].centroid.x() > 0);
  CHECK(reg[2].centroid.y() > 0);
  for (int i = 0; i < 3; ++i) {
    CHECK(reg[i].global_id == i + 1);
    CHECK(reg[i].members.size() == 4);
    CHECK(reg[i].members.front().image_id == "img0");
    const double angle = std::acos(std::clamp(reg[i].normal.dot(reg[i].centroid.normalized()), -1.0, 1.0));
    CHECK(angle < 5.0 * 3.14159265358979 / 180.0);
    CHECK((sphere.vertices[reg[i].nearest_vertex] - reg[i].centroid).norm() < 0.03);
  }
  CHECK(build_registry(sightings, {}, TriMesh{}).empty());
  CHECK_THROWS_AS(build_registry(sightings, clusters, TriMesh{}), ParameterError);
}

TEST_CASE("registry JSON round trip") {
  const auto dir = testutil::scratch("fuse_json");
  LesionRegistry r;
  GlobalLesion l;
  l.global_id = 1;
  l.centroid = Vec3(0.1, 1.2, -0.3);
  l.normal = Vec3(0, 0, -1);
  l.nearest_vertex = 77;
  l.members = {{"A1", 0}, {"B1", 3}};
  r.lesions.push_back(l);
  r.rejected = {{{"C2", 1}}};
  r.off_subject = {{"D4", 2}};
  write_registry(dir / "l.json", r);
  const auto back = read_registry(dir / "l.json");
  REQUIRE(back.lesions.size() == 1);
  CHECK(back.lesions[0].centroid == l.centroid);
  CHECK(back.lesions[0].normal == l.normal);
  CHECK(back.lesions[0].members == l.members);
  CHECK(back.lesions[0].nearest_vertex == 77);
  CHECK(back.rejected == r.rejected);
  CHECK(back.off_subject == r.off_subject);
  const auto j = read_json(dir / "l.json");
  CHECK(j["rejected"][0].contains("members"));
  CHECK_THROWS_AS(registry_from_json(nlohmann::json::parse(R"({"lesions": [{"global_id": 1}]})")), FormatError);
}
