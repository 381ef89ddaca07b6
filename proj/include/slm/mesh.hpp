#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "slm/image.hpp"
#include "slm/types.hpp"

namespace slm {

using Face = std::array<int, 3>;
using FaceUv = std::array<Vec2, 3>;

/// Triangle mesh with per-corner texture coordinates and a single texture.
///
/// UV convention follows Wavefront OBJ: v = 0 is the bottom row of the
/// texture image. `uvs` is either empty (untextured) or holds one entry per
/// face.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<FaceUv> uvs;
  ColorImage texture;
  std::vector<Vec3> vertex_normals;

  bool empty() const { return vertices.empty() || faces.empty(); }
  bool textured() const { return !uvs.empty() && !texture.empty(); }

  Vec3 corner(std::size_t face, int k) const { return vertices[faces[face][k]]; }
  double face_area(std::size_t face) const;
  Vec3 face_normal(std::size_t face) const;

  /// Area-weighted average of incident face normals, normalized.
  void compute_normals();

  /// Throws ParameterError on out-of-range indices, repeated face vertices or
  /// a UV array whose size does not match the faces.
  void validate() const;
};

/// Texel addressed by a UV coordinate (nearest texel, wrapped into [0,1)).
std::array<int, 2> uv_to_texel(const Vec2& uv, int tex_width, int tex_height);
/// UV coordinate of a texel center.
Vec2 texel_to_uv(int tx, int ty, int tex_width, int tex_height);

/// Nearest-texel color lookup; untextured meshes read as mid gray.
Rgb sample_texture(const ColorImage& texture, const Vec2& uv);

/// Loads a Wavefront OBJ. Polygons are triangulated by fan; the first
/// `map_Kd` found in the referenced MTL is loaded as the texture (PNG).
TriMesh read_obj(const std::filesystem::path& path);

/// Writes `<stem>.obj`, `<stem>.mtl` and, when textured, `<stem>.png` next to
/// each other.
void write_obj(const std::filesystem::path& path, const TriMesh& mesh);

/// ASCII PLY point cloud with float x, y, z vertex properties.
std::vector<Vec3> read_ply_points(const std::filesystem::path& path);
void write_ply_points(const std::filesystem::path& path, const std::vector<Vec3>& points);

/// Geodesic sphere from a subdivided icosahedron (subdivision 0 has 12
/// vertices, 4 has 2562).
TriMesh make_icosphere(int subdivisions, double radius = 1.0, const Vec3& center = Vec3::Zero());

/// Unique undirected edges (i < j) of the face graph, sorted.
std::vector<std::array<int, 2>> mesh_edges(const TriMesh& mesh);

}  // namespace slm
