#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "slm/errors.hpp"
#include "slm/mesh.hpp"
#include "unit/util.hpp"

using namespace slm;

namespace {

TriMesh textured_quad() {
  TriMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}, {0, 2, 3}};
  m.uvs = {FaceUv{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1)}, FaceUv{Vec2(0, 0), Vec2(1, 1), Vec2(0, 1)}};
  m.texture = ColorImage(4, 2, Rgb{10, 20, 30});
  m.texture.at(3, 0) = {200, 0, 0};
  return m;
}

}  // namespace

TEST_CASE("OBJ round trip with texture") {
  const auto dir = testutil::scratch("mesh_obj");
  const TriMesh m = textured_quad();
  write_obj(dir / "quad.obj", m);
  CHECK(std::filesystem::exists(dir / "quad.mtl"));
  CHECK(std::filesystem::exists(dir / "quad.png"));
  const TriMesh back = read_obj(dir / "quad.obj");
  CHECK(back.vertices == m.vertices);
  CHECK(back.faces == m.faces);
  REQUIRE(back.uvs.size() == m.uvs.size());
  for (std::size_t f = 0; f < m.uvs.size(); ++f) {
    for (int k = 0; k < 3; ++k) CHECK(back.uvs[f][k] == m.uvs[f][k]);
  }
  CHECK(back.texture == m.texture);
  REQUIRE(back.vertex_normals.size() == 4);
  CHECK((back.vertex_normals[0] - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("OBJ quads, negative indices and missing texture coordinates") {
  const auto dir = testutil::scratch("mesh_obj_forms");
  std::ofstream(dir / "q.obj") << "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                                  "vn 0 0 1\nf -4//1 -3//1 -2//1 -1//1\n";
  const TriMesh m = read_obj(dir / "q.obj");
  REQUIRE(m.faces.size() == 2);
  CHECK(m.faces[0] == Face{0, 1, 2});
  CHECK(m.faces[1] == Face{0, 2, 3});
  CHECK(m.uvs.empty());
  CHECK_FALSE(m.textured());

  std::ofstream(dir / "bad.obj") << "v 0 0 0\nv 1 0 0\nf 1 2 5\n";
  CHECK_THROWS_AS(read_obj(dir / "bad.obj"), FormatError);
  std::ofstream(dir / "short.obj") << "v 0 0 0\nv 1 0 0\nf 1 2\n";
  CHECK_THROWS_AS(read_obj(dir / "short.obj"), FormatError);
  std::ofstream(dir / "jpg.obj") << "mtllib jpg.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
  std::ofstream(dir / "jpg.mtl") << "newmtl m\nmap_Kd tex.jpg\n";
  CHECK_THROWS_AS(read_obj(dir / "jpg.obj"), FormatError);
  CHECK_THROWS_AS(read_obj(dir / "absent.obj"), NotFoundError);
}

TEST_CASE("icosphere vertex and face counts") {
  const int expected[] = {12, 42, 162, 642, 2562};
  for (int s = 0; s <= 4; ++s) {
    const TriMesh m = make_icosphere(s, 2.0, Vec3(1, 2, 3));
    CHECK(m.vertices.size() == static_cast<std::size_t>(expected[s]));
    CHECK(m.faces.size() == static_cast<std::size_t>(20 * (1 << (2 * s))));
    // Closed genus-0 surface: V - E + F = 2 and every edge borders two faces.
    const auto edges = mesh_edges(m);
    CHECK(edges.size() * 2 == m.faces.size() * 3);
    CHECK(static_cast<long>(m.vertices.size()) - static_cast<long>(edges.size()) +
              static_cast<long>(m.faces.size()) ==
          2);
    for (const auto& v : m.vertices) CHECK((v - Vec3(1, 2, 3)).norm() == doctest::Approx(2.0));
    CHECK_NOTHROW(m.validate());
  }
  CHECK_THROWS_AS(make_icosphere(-1), ParameterError);
}

TEST_CASE("icosphere normals point outward") {
  TriMesh m = make_icosphere(2);
  m.compute_normals();
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const Vec3 c = (m.corner(f, 0) + m.corner(f, 1) + m.corner(f, 2)) / 3.0;
    CHECK(m.face_normal(f).dot(c) > 0.0);
  }
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    CHECK(m.vertex_normals[i].dot(m.vertices[i]) > 0.99);
  }
}

TEST_CASE("face area") {
  const TriMesh m = textured_quad();
  CHECK(m.face_area(0) == doctest::Approx(0.5));
  CHECK(m.face_area(1) == doctest::Approx(0.5));
}

TEST_CASE("mesh validation") {
  TriMesh m = textured_quad();
  CHECK_NOTHROW(m.validate());
  m.faces[1] = {0, 2, 4};
  CHECK_THROWS_AS(m.validate(), ParameterError);
  m.faces[1] = {0, 2, 2};
  CHECK_THROWS_AS(m.validate(), ParameterError);
  m = textured_quad();
  m.uvs.pop_back();
  CHECK_THROWS_AS(m.validate(), ParameterError);
}

TEST_CASE("uv to texel follows the bottom-up v axis") {
  auto t = uv_to_texel(Vec2(0.0, 0.0), 4, 2);
  CHECK(t == std::array<int, 2>{0, 1});
  t = uv_to_texel(Vec2(1.0, 1.0), 4, 2);
  CHECK(t == std::array<int, 2>{3, 0});
  t = uv_to_texel(Vec2(1.25, -0.25), 4, 2);  // wraps
  CHECK(t == std::array<int, 2>{1, 0});
  for (int ty = 0; ty < 2; ++ty) {
    for (int tx = 0; tx < 4; ++tx) {
      CHECK(uv_to_texel(texel_to_uv(tx, ty, 4, 2), 4, 2) == std::array<int, 2>{tx, ty});
    }
  }
  const TriMesh m = textured_quad();
  CHECK(sample_texture(m.texture, Vec2(0.99, 0.99)) == Rgb{200, 0, 0});
  CHECK(sample_texture(ColorImage(), Vec2(0.5, 0.5)) == Rgb{128, 128, 128});
}

TEST_CASE("PLY point round trip") {
  const auto dir = testutil::scratch("mesh_ply");
  std::vector<Vec3> pts = {{0, 0, 0}, {1.5, -2, 3.25}, {1e-3, 2e-3, 3e-3}};
  write_ply_points(dir / "p.ply", pts);
  const auto back = read_ply_points(dir / "p.ply");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK((back[i] - pts[i]).norm() < 1e-6);

  std::ofstream(dir / "extra.ply") << "ply\nformat ascii 1.0\nelement vertex 2\n"
                                      "property float z\nproperty float y\nproperty float x\n"
                                      "property uchar red\nend_header\n3 2 1 255\n6 5 4 0\n";
  const auto ex = read_ply_points(dir / "extra.ply");
  REQUIRE(ex.size() == 2);
  CHECK((ex[0] - Vec3(1, 2, 3)).norm() < 1e-12);
  CHECK((ex[1] - Vec3(4, 5, 6)).norm() < 1e-12);

  std::ofstream(dir / "bin.ply") << "ply\nformat binary_little_endian 1.0\nend_header\n";
  CHECK_THROWS_AS(read_ply_points(dir / "bin.ply"), FormatError);
  std::ofstream(dir / "junk.ply") << "not ply\n";
  CHECK_THROWS_AS(read_ply_points(dir / "junk.ply"), FormatError);
}

TEST_CASE("mesh edges are unique and sorted") {
  const TriMesh m = textured_quad();
  const auto e = mesh_edges(m);
  const std::vector<std::array<int, 2>> expected = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {2, 3}};
  CHECK(e == expected);
}
