#include "slm/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "slm/errors.hpp"

namespace slm {

namespace {

struct Section {
  double y, half_width, half_depth;
};

// Sole to crown; half-widths along x, half-depths along z.
constexpr std::array<Section, 20> kProfile{{
    {0.000, 0.105, 0.080}, {0.040, 0.120, 0.095}, {0.100, 0.110, 0.070}, {0.300, 0.135, 0.080},
    {0.480, 0.130, 0.075}, {0.700, 0.165, 0.095}, {0.880, 0.180, 0.110}, {1.000, 0.165, 0.105},
    {1.080, 0.150, 0.100}, {1.250, 0.165, 0.110}, {1.380, 0.185, 0.110}, {1.440, 0.160, 0.090},
    {1.490, 0.065, 0.060}, {1.530, 0.060, 0.062}, {1.580, 0.072, 0.088}, {1.640, 0.078, 0.097},
    {1.690, 0.068, 0.085}, {1.715, 0.045, 0.055}, {1.725, 0.025, 0.030}, {1.730, 0.000, 0.000},
}};

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

Vec2 section_at(double y) {
  if (y <= kProfile.front().y) return {kProfile.front().half_width, kProfile.front().half_depth};
  for (std::size_t k = 1; k < kProfile.size(); ++k) {
    if (y <= kProfile[k].y) {
      const auto& lo = kProfile[k - 1];
      const auto& hi = kProfile[k];
      const double t = smoothstep((y - lo.y) / (hi.y - lo.y));
      return {lo.half_width + t * (hi.half_width - lo.half_width),
              lo.half_depth + t * (hi.half_depth - lo.half_depth)};
    }
  }
  return {0.0, 0.0};
}

}  // namespace

TriMesh make_phantom(const PhantomParams& params) {
  if (params.around < 3 || params.along < 2) throw ParameterError("phantom: too few samples");
  if (params.texture_width < 1 || params.texture_height < 1) {
    throw ParameterError("phantom: empty texture");
  }
  const int n = params.around, rings = params.along;
  const double top = kProfile.back().y;
  TriMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(n) * rings + 2);
  std::vector<double> ring_y(rings);
  for (int j = 0; j < rings; ++j) {
    ring_y[j] = top * j / rings;
    const Vec2 s = section_at(ring_y[j]);
    for (int i = 0; i < n; ++i) {
      const double phi = 2.0 * std::numbers::pi * i / n;
      mesh.vertices.emplace_back(s.x() * std::sin(phi), ring_y[j], s.y() * std::cos(phi));
    }
  }
  const int sole = static_cast<int>(mesh.vertices.size());
  mesh.vertices.emplace_back(0.0, 0.0, 0.0);
  const int crown = static_cast<int>(mesh.vertices.size());
  mesh.vertices.emplace_back(0.0, top, 0.0);

  const auto vid = [n](int j, int i) { return j * n + (i % n); };
  const auto uv = [&](int j, int i) { return Vec2(static_cast<double>(i) / n, ring_y[j] / top); };
  for (int j = 0; j + 1 < rings; ++j) {
    for (int i = 0; i < n; ++i) {
      mesh.faces.push_back({vid(j, i), vid(j, i + 1), vid(j + 1, i + 1)});
      mesh.uvs.push_back({uv(j, i), uv(j, i + 1), uv(j + 1, i + 1)});
      mesh.faces.push_back({vid(j, i), vid(j + 1, i + 1), vid(j + 1, i)});
      mesh.uvs.push_back({uv(j, i), uv(j + 1, i + 1), uv(j + 1, i)});
    }
  }
  for (int i = 0; i < n; ++i) {
    const double mid = (i + 0.5) / n;
    mesh.faces.push_back({sole, vid(0, i + 1), vid(0, i)});
    mesh.uvs.push_back({Vec2(mid, 0.0), uv(0, i + 1), uv(0, i)});
    mesh.faces.push_back({crown, vid(rings - 1, i), vid(rings - 1, i + 1)});
    mesh.uvs.push_back({Vec2(mid, 1.0), uv(rings - 1, i), uv(rings - 1, i + 1)});
  }

  mesh.texture = ColorImage(params.texture_width, params.texture_height, params.skin);
  if (params.texture_noise > 0) {
    std::mt19937_64 rng(params.seed);
    std::uniform_int_distribution<int> noise(-params.texture_noise, params.texture_noise);
    const auto jitter = [&](std::uint8_t c) {
      return static_cast<std::uint8_t>(std::clamp(c + noise(rng), 0, 255));
    };
    for (auto& t : mesh.texture.data()) t = {jitter(t.r), jitter(t.g), jitter(t.b)};
  }
  mesh.compute_normals();
  return mesh;
}

Vec3 bend_point(const Vec3& p, const BendParams& params) {
  if (!(params.length > 0.0)) throw ParameterError("bend: length must be positive");
  if (params.angle_rad == 0.0 || p.y() <= params.start_y) return p;
  const double rho = params.length / params.angle_rad;
  const double s = std::min(p.y() - params.start_y, params.length);
  const double above = std::max(p.y() - params.start_y - params.length, 0.0);
  const double theta = s / rho;
  const double c = std::cos(theta), sn = std::sin(theta);
  // Position along the bent centerline plus the z offset carried by the
  // rotated cross section; the part above the band continues straight.
  const double y = params.start_y + rho * sn + above * c - p.z() * sn;
  const double z = rho * (1.0 - c) + above * sn + p.z() * c;
  return {p.x(), y, z};
}

TriMesh bend_mesh(const TriMesh& mesh, const BendParams& params) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = bend_point(v, params);
  out.compute_normals();
  return out;
}

std::vector<SurfaceSample> place_lesions(const TriMesh& mesh, const LesionPlacement& placement) {
  if (placement.count < 0) throw ParameterError("place_lesions: negative count");
  std::vector<SurfaceSample> out;
  if (placement.count == 0) return out;
  std::vector<double> areas(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) areas[f] = mesh.face_area(f);
  std::discrete_distribution<std::size_t> pick_face(areas.begin(), areas.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::mt19937_64 rng(placement.seed);
  const int max_attempts = 200000;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < placement.count;
       ++attempt) {
    const std::size_t f = pick_face(rng);
    const double r1 = std::sqrt(unit(rng)), r2 = unit(rng);
    const Vec3 bary(1.0 - r1, r1 * (1.0 - r2), r1 * r2);
    const Vec3 p = bary.x() * mesh.corner(f, 0) + bary.y() * mesh.corner(f, 1) +
                   bary.z() * mesh.corner(f, 2);
    if (p.y() < placement.y_min || p.y() > placement.y_max) continue;
    if (std::abs(mesh.face_normal(f).y()) > placement.max_abs_normal_y) continue;
    const bool crowded = std::any_of(out.begin(), out.end(), [&](const SurfaceSample& s) {
      return (s.point - p).norm() < placement.min_separation;
    });
    if (crowded) continue;
    out.push_back({static_cast<int>(f), bary, p});
  }
  if (static_cast<int>(out.size()) < placement.count) {
    throw ParameterError("place_lesions: could not place " + std::to_string(placement.count) +
                         " lesions with the requested separation");
  }
  return out;
}

SurfaceSample transfer_sample(const SurfaceSample& sample, const TriMesh& mesh) {
  if (sample.face < 0 || static_cast<std::size_t>(sample.face) >= mesh.faces.size()) {
    throw ParameterError("transfer_sample: face out of range");
  }
  SurfaceSample out = sample;
  out.point = sample.barycentric.x() * mesh.corner(sample.face, 0) +
              sample.barycentric.y() * mesh.corner(sample.face, 1) +
              sample.barycentric.z() * mesh.corner(sample.face, 2);
  return out;
}

}  // namespace slm
