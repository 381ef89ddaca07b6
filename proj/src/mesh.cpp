#include "slm/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "slm/errors.hpp"
#include "slm/fileio.hpp"

namespace slm {

double TriMesh::face_area(std::size_t face) const {
  const Vec3 a = corner(face, 0), b = corner(face, 1), c = corner(face, 2);
  return 0.5 * (b - a).cross(c - a).norm();
}

Vec3 TriMesh::face_normal(std::size_t face) const {
  const Vec3 a = corner(face, 0), b = corner(face, 1), c = corner(face, 2);
  const Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

void TriMesh::compute_normals() {
  vertex_normals.assign(vertices.size(), Vec3::Zero());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 a = corner(f, 0), b = corner(f, 1), c = corner(f, 2);
    // Cross product magnitude is twice the area: area weighting for free.
    const Vec3 n = (b - a).cross(c - a);
    for (int k = 0; k < 3; ++k) vertex_normals[faces[f][k]] += n;
  }
  for (auto& n : vertex_normals) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::UnitY();
  }
}

void TriMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k) {
      if (f[k] < 0 || f[k] >= n) throw ParameterError("mesh: face index out of range");
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw ParameterError("mesh: face with repeated vertices");
    }
  }
  if (!uvs.empty() && uvs.size() != faces.size()) {
    throw ParameterError("mesh: uv array does not match face count");
  }
  if (!vertex_normals.empty() && vertex_normals.size() != vertices.size()) {
    throw ParameterError("mesh: normal array does not match vertex count");
  }
}

std::array<int, 2> uv_to_texel(const Vec2& uv, int tex_width, int tex_height) {
  double u = uv.x() - std::floor(uv.x());
  double v = uv.y() - std::floor(uv.y());
  // Exactly 1.0 is a legal coordinate that should address the last texel.
  if (uv.x() == 1.0) u = 1.0 - 1e-12;
  if (uv.y() == 1.0) v = 1.0 - 1e-12;
  const int tx = std::clamp(static_cast<int>(u * tex_width), 0, tex_width - 1);
  const int ty = std::clamp(static_cast<int>((1.0 - v) * tex_height), 0, tex_height - 1);
  return {tx, ty};
}

Vec2 texel_to_uv(int tx, int ty, int tex_width, int tex_height) {
  return {(tx + 0.5) / tex_width, 1.0 - (ty + 0.5) / tex_height};
}

Rgb sample_texture(const ColorImage& texture, const Vec2& uv) {
  if (texture.empty()) return {128, 128, 128};
  const auto [tx, ty] = uv_to_texel(uv, texture.width(), texture.height());
  return texture.at(tx, ty);
}

namespace {

int resolve_index(long idx, std::size_t count, const std::string& where) {
  long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
  if (idx == 0 || resolved < 0 || resolved >= static_cast<long>(count)) {
    throw FormatError(where + ": index " + std::to_string(idx) + " out of range");
  }
  return static_cast<int>(resolved);
}

std::filesystem::path find_texture(const std::filesystem::path& mtl_path) {
  std::ifstream in(mtl_path);
  if (!in) return {};
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != "map_Kd") continue;
    std::string token, last;
    while (ls >> token) last = token;  // options such as -s precede the name
    if (!last.empty()) return mtl_path.parent_path() / last;
  }
  return {};
}

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

TriMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  TriMesh mesh;
  std::vector<Vec2> texcoords;
  std::vector<std::array<int, 3>> face_vt;
  bool any_vt = false;
  std::filesystem::path mtl;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (key == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw FormatError(where + ": malformed vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (key == "vt") {
      double u, v = 0.0;
      if (!(ls >> u)) throw FormatError(where + ": malformed texture coordinate");
      ls >> v;
      texcoords.emplace_back(u, v);
    } else if (key == "f") {
      std::vector<int> vi, ti;
      std::string token;
      while (ls >> token) {
        const auto slash = token.find('/');
        vi.push_back(resolve_index(std::stol(token.substr(0, slash)), mesh.vertices.size(), where));
        int t = -1;
        if (slash != std::string::npos) {
          const auto rest = token.substr(slash + 1);
          const auto slash2 = rest.find('/');
          const auto tstr = rest.substr(0, slash2);
          if (!tstr.empty()) t = resolve_index(std::stol(tstr), texcoords.size(), where);
        }
        ti.push_back(t);
      }
      if (vi.size() < 3) throw FormatError(where + ": face with fewer than 3 vertices");
      for (std::size_t k = 1; k + 1 < vi.size(); ++k) {
        const Face f{vi[0], vi[k], vi[k + 1]};
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
        mesh.faces.push_back(f);
        face_vt.push_back({ti[0], ti[k], ti[k + 1]});
        any_vt = any_vt || ti[0] >= 0 || ti[k] >= 0 || ti[k + 1] >= 0;
      }
    } else if (key == "mtllib") {
      std::string name;
      std::getline(ls >> std::ws, name);
      mtl = path.parent_path() / name;
    }
  }
  if (any_vt) {
    mesh.uvs.reserve(mesh.faces.size());
    for (const auto& t : face_vt) {
      FaceUv uv;
      for (int k = 0; k < 3; ++k) uv[k] = t[k] >= 0 ? texcoords[t[k]] : Vec2::Zero();
      mesh.uvs.push_back(uv);
    }
  }
  if (!mtl.empty()) {
    const auto tex = find_texture(mtl);
    if (!tex.empty()) {
      if (tex.extension() != ".png" && tex.extension() != ".PNG") {
        throw FormatError(tex.string() + ": only PNG textures are supported");
      }
      mesh.texture = read_png_rgb(tex);
    }
  }
  mesh.compute_normals();
  return mesh;
}

void write_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  const auto stem = path.stem().string();
  const auto dir = path.parent_path();
  std::string out;
  out.reserve(mesh.vertices.size() * 48 + mesh.faces.size() * 96);
  out += "mtllib " + stem + ".mtl\n";
  for (const auto& v : mesh.vertices) {
    out += "v " + fmt_double(v.x()) + ' ' + fmt_double(v.y()) + ' ' + fmt_double(v.z()) + '\n';
  }
  const bool with_uv = !mesh.uvs.empty();
  if (with_uv) {
    for (const auto& uv : mesh.uvs) {
      for (int k = 0; k < 3; ++k) {
        out += "vt " + fmt_double(uv[k].x()) + ' ' + fmt_double(uv[k].y()) + '\n';
      }
    }
  }
  out += "usemtl body\n";
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    out += 'f';
    for (int k = 0; k < 3; ++k) {
      out += ' ' + std::to_string(mesh.faces[f][k] + 1);
      if (with_uv) out += '/' + std::to_string(3 * f + k + 1);
    }
    out += '\n';
  }
  write_file_atomic(path, out);

  std::string mtl = "newmtl body\nKa 1 1 1\nKd 1 1 1\n";
  if (!mesh.texture.empty()) {
    mtl += "map_Kd " + stem + ".png\n";
    write_png(dir / (stem + ".png"), mesh.texture);
  }
  write_file_atomic(dir / (stem + ".mtl"), mtl);
}

std::vector<Vec3> read_ply_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw FormatError(path.string() + ": missing ply magic");
  std::size_t count = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw FormatError(path.string() + ": only ASCII PLY is supported");
    } else if (key == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (key == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw FormatError(path.string() + ": list vertex properties");
      props.push_back(name);
    } else if (key == "end_header") {
      break;
    }
  }
  const auto find = [&](const char* name) {
    const auto it = std::find(props.begin(), props.end(), name);
    if (it == props.end()) throw FormatError(path.string() + ": missing property " + name);
    return static_cast<std::size_t>(it - props.begin());
  };
  const std::size_t ix = find("x"), iy = find("y"), iz = find("z");
  std::vector<Vec3> points;
  points.reserve(count);
  std::vector<double> row(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& value : row) {
      if (!(in >> value)) throw FormatError(path.string() + ": truncated vertex data");
    }
    points.emplace_back(row[ix], row[iy], row[iz]);
  }
  return points;
}

void write_ply_points(const std::filesystem::path& path, const std::vector<Vec3>& points) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(points.size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (const auto& p : points) {
    out += fmt_double(p.x()) + ' ' + fmt_double(p.y()) + ' ' + fmt_double(p.z()) + '\n';
  }
  write_file_atomic(path, out);
}

TriMesh make_icosphere(int subdivisions, double radius, const Vec3& center) {
  if (subdivisions < 0) throw ParameterError("icosphere: negative subdivision level");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriMesh mesh;
  mesh.vertices.reserve(v.size());
  for (const auto& p : v) mesh.vertices.push_back(center + radius * p);
  mesh.faces = std::move(f);
  mesh.compute_normals();
  return mesh;
}

std::vector<std::array<int, 2>> mesh_edges(const TriMesh& mesh) {
  std::vector<std::array<int, 2>> edges;
  edges.reserve(mesh.faces.size() * 3);
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const auto [a, b] = std::minmax(f[k], f[(k + 1) % 3]);
      edges.push_back({a, b});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace slm
