#include "slm/meshops.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "slm/errors.hpp"
#include "slm/parallel.hpp"
#include "slm/spatial.hpp"

namespace slm {

namespace {

/// Least-squares plane through points: centroid plus the eigenvector of the
/// smallest covariance eigenvalue. Also reports the two largest eigenvalues.
Plane least_squares_plane(const std::vector<Vec3>& points, const std::vector<std::size_t>& idx,
                          Vec3* eigenvalues = nullptr) {
  Vec3 centroid = Vec3::Zero();
  for (auto i : idx) centroid += points[i];
  centroid /= static_cast<double>(idx.size());
  Mat3 cov = Mat3::Zero();
  for (auto i : idx) {
    const Vec3 d = points[i] - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  if (eigenvalues) *eigenvalues = solver.eigenvalues();
  Plane plane;
  plane.normal = solver.eigenvectors().col(0).normalized();
  plane.offset = plane.normal.dot(centroid);
  return plane;
}

// Points within `band` of the plane do not vote.
void orient_majority_positive(Plane& plane, const std::vector<Vec3>& points, double band) {
  std::size_t above = 0, below = 0;
  for (const auto& p : points) {
    const double d = plane.signed_distance(p);
    if (d > band) ++above;
    if (d < -band) ++below;
  }
  bool flip = below > above;
  if (above == below) {
    // No majority (e.g. every point on the plane): prefer +y, then +x, then +z.
    const Vec3& n = plane.normal;
    const double key = std::abs(n.y()) > 1e-12 ? n.y() : (std::abs(n.x()) > 1e-12 ? n.x() : n.z());
    flip = key < 0.0;
  }
  if (flip) {
    plane.normal = -plane.normal;
    plane.offset = -plane.offset;
  }
}

std::array<std::size_t, 3> pick3(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  std::size_t a = dist(rng), b = dist(rng), c = dist(rng);
  while (b == a) b = dist(rng);
  while (c == a || c == b) c = dist(rng);
  return {a, b, c};
}

/// Orthonormal basis (u, v) spanning the plane.
std::pair<Vec3, Vec3> plane_basis(const Vec3& n) {
  const Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
  const Vec3 u = (a - a.dot(n) * n).normalized();
  return {u, n.cross(u)};
}

bool circumcircle(const Vec2& a, const Vec2& b, const Vec2& c, Vec2& center, double& radius) {
  const double d = 2.0 * (a.x() * (b.y() - c.y()) + b.x() * (c.y() - a.y()) + c.x() * (a.y() - b.y()));
  const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), 1e-300});
  if (std::abs(d) < 1e-12 * scale) return false;
  const double a2 = a.squaredNorm(), b2 = b.squaredNorm(), c2 = c.squaredNorm();
  center = Vec2((a2 * (b.y() - c.y()) + b2 * (c.y() - a.y()) + c2 * (a.y() - b.y())) / d,
                (a2 * (c.x() - b.x()) + b2 * (a.x() - c.x()) + c2 * (b.x() - a.x())) / d);
  radius = (a - center).norm();
  return true;
}

}  // namespace

PlaneFit fit_ground_plane(const std::vector<Vec3>& points, double inlier_tol, int iterations,
                          std::uint64_t seed) {
  if (points.size() < 3) throw FitError("fit_ground_plane: need at least 3 points");
  if (!(inlier_tol > 0.0) || iterations < 1) {
    throw ParameterError("fit_ground_plane: tolerance and iterations must be positive");
  }
  std::vector<std::size_t> all(points.size());
  std::iota(all.begin(), all.end(), 0);
  Vec3 spread;
  least_squares_plane(points, all, &spread);
  // spread is ascending; a collinear set has a single nonzero eigenvalue.
  if (spread[1] <= 1e-18 * std::max(spread[2], 1e-300) || spread[2] <= 0.0) {
    throw FitError("fit_ground_plane: points are collinear");
  }

  std::mt19937_64 rng(seed);
  std::size_t best_count = 0;
  Plane best;
  for (int it = 0; it < iterations; ++it) {
    const auto [i, j, k] = pick3(rng, points.size());
    const Vec3 n = (points[j] - points[i]).cross(points[k] - points[i]);
    const double len = n.norm();
    if (len < 1e-12 * (points[j] - points[i]).squaredNorm() || len == 0.0) continue;
    Plane h{n / len, (n / len).dot(points[i])};
    std::size_t count = 0;
    for (const auto& p : points) count += std::abs(h.signed_distance(p)) <= inlier_tol;
    if (count > best_count) {
      best_count = count;
      best = h;
    }
  }
  if (best_count < 3) throw FitError("fit_ground_plane: no non-degenerate hypothesis");

  std::vector<std::size_t> inliers;
  for (int round = 0; round < 3; ++round) {
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (std::abs(best.signed_distance(points[i])) <= inlier_tol) next.push_back(i);
    }
    if (next.size() < 3 || next == inliers) break;
    inliers = std::move(next);
    best = least_squares_plane(points, inliers);
  }
  orient_majority_positive(best, points, inlier_tol);

  PlaneFit fit;
  fit.plane = best;
  fit.inliers = inliers.size();
  double ss = 0.0;
  for (auto i : inliers) ss += std::pow(best.signed_distance(points[i]), 2);
  fit.rms_residual = inliers.empty() ? 0.0 : std::sqrt(ss / inliers.size());
  return fit;
}

bool kasa_circle_fit(const std::vector<Vec2>& points, Vec2& center, double& radius) {
  if (points.size() < 3) return false;
  Vec2 mean = Vec2::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Eigen::MatrixXd a(points.size(), 3);
  Eigen::VectorXd b(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec2 q = points[i] - mean;
    a(i, 0) = q.x();
    a(i, 1) = q.y();
    a(i, 2) = 1.0;
    b(i) = -q.squaredNorm();
  }
  const auto qr = a.colPivHouseholderQr();
  if (qr.rank() < 3) return false;  // collinear
  const Eigen::Vector3d sol = qr.solve(b);
  if (!sol.allFinite()) return false;
  const Vec2 c(-sol(0) / 2.0, -sol(1) / 2.0);
  const double r2 = c.squaredNorm() - sol(2);
  if (!(r2 > 0.0)) return false;
  center = c + mean;
  radius = std::sqrt(r2);
  return true;
}

CircleFit fit_stand_circle(const std::vector<Vec3>& points, const Plane& ground, double band,
                           std::uint64_t seed, int iterations) {
  if (!(band > 0.0)) throw ParameterError("fit_stand_circle: band must be positive");
  const auto [u, v] = plane_basis(ground.normal);
  const Vec3 origin = ground.normal * ground.offset;
  std::vector<Vec2> flat;
  for (const auto& p : points) {
    if (std::abs(ground.signed_distance(p)) <= band) {
      const Vec3 q = ground.project(p) - origin;
      flat.emplace_back(q.dot(u), q.dot(v));
    }
  }
  if (flat.size() < 3) throw FitError("fit_stand_circle: fewer than 3 points near the ground");

  const double tol = band / 2.0;
  std::mt19937_64 rng(seed);
  std::size_t best_count = 0;
  Vec2 best_center = Vec2::Zero();
  double best_radius = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const auto [i, j, k] = pick3(rng, flat.size());
    Vec2 c;
    double r;
    if (!circumcircle(flat[i], flat[j], flat[k], c, r)) continue;
    std::size_t count = 0;
    for (const auto& p : flat) count += std::abs((p - c).norm() - r) <= tol;
    if (count > best_count) {
      best_count = count;
      best_center = c;
      best_radius = r;
    }
  }
  if (best_count < 3) throw FitError("fit_stand_circle: no non-degenerate circle hypothesis");

  std::vector<Vec2> inliers;
  for (const auto& p : flat) {
    if (std::abs((p - best_center).norm() - best_radius) <= tol) inliers.push_back(p);
  }
  Vec2 c = best_center;
  double r = best_radius;
  if (!kasa_circle_fit(inliers, c, r)) {
    c = best_center;
    r = best_radius;
  }
  CircleFit fit;
  fit.candidates = flat.size();
  fit.inliers = inliers.size();
  double ss = 0.0;
  for (const auto& p : inliers) ss += std::pow((p - c).norm() - r, 2);
  fit.rms_residual = std::sqrt(ss / inliers.size());
  fit.circle.center = origin + c.x() * u + c.y() * v;
  fit.circle.radius = r;
  fit.circle.plane = ground;
  return fit;
}

Mat4 canonical_transform(const Plane& ground, const Circle3D& stand, double stand_diameter_m) {
  if (!(stand.radius > 0.0)) throw ParameterError("canonicalize: stand radius must be positive");
  if (!(stand_diameter_m > 0.0)) {
    throw ParameterError("canonicalize: stand diameter must be positive");
  }
  const double scale = stand_diameter_m / (2.0 * stand.radius);
  const Mat3 rot =
      Eigen::Quaterniond::FromTwoVectors(ground.normal.normalized(), Vec3::UnitY())
          .toRotationMatrix();
  const Vec3 center = ground.project(stand.center);
  Mat4 t = Mat4::Identity();
  t.topLeftCorner<3, 3>() = scale * rot;
  t.topRightCorner<3, 1>() = -scale * (rot * center);
  return t;
}

Canonicalization canonicalize(const TriMesh& mesh, const Plane& ground, const Circle3D& stand,
                              double stand_diameter_m, const CaptureCylinder& crop) {
  crop.validate();
  Canonicalization out;
  out.transform = canonical_transform(ground, stand, stand_diameter_m);
  out.scale = stand_diameter_m / (2.0 * stand.radius);
  const Mat3 lin = out.transform.topLeftCorner<3, 3>();
  const Vec3 off = out.transform.topRightCorner<3, 1>();

  constexpr double kEps = 1e-9;
  CaptureCylinder padded = crop;
  padded.radius += kEps;
  padded.y_min = std::min(crop.y_min, 0.0) - kEps;
  padded.y_max += kEps;

  std::vector<Vec3> moved(mesh.vertices.size());
  std::vector<char> keep(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    moved[i] = lin * mesh.vertices[i] + off;
    keep[i] = moved[i].y() >= -kEps && padded.contains(moved[i]);
  }
  std::vector<int> remap(mesh.vertices.size(), -1);
  std::vector<char> used(mesh.vertices.size(), 0);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    if (keep[tri[0]] && keep[tri[1]] && keep[tri[2]]) {
      for (int k = 0; k < 3; ++k) used[tri[k]] = 1;
      out.mesh.faces.push_back(tri);
      if (!mesh.uvs.empty()) out.mesh.uvs.push_back(mesh.uvs[f]);
    } else {
      ++out.cropped_faces;
    }
  }
  for (std::size_t i = 0; i < moved.size(); ++i) {
    if (used[i]) {
      remap[i] = static_cast<int>(out.mesh.vertices.size());
      out.mesh.vertices.push_back(moved[i]);
    }
  }
  out.cropped_vertices = mesh.vertices.size() - out.mesh.vertices.size();
  for (auto& tri : out.mesh.faces) {
    for (auto& idx : tri) idx = remap[idx];
  }
  out.mesh.texture = mesh.texture;
  out.mesh.compute_normals();
  return out;
}

CameraRecord transform_camera(const CameraRecord& cam, const Mat4& similarity) {
  const Mat3 lin = similarity.topLeftCorner<3, 3>();
  const double scale = std::cbrt(lin.determinant());
  if (!(scale > 0.0)) throw ParameterError("transform_camera: not a proper similarity");
  CameraRecord out = cam;
  out.world_from_camera.topLeftCorner<3, 3>() = (lin / scale) * cam.rotation();
  out.world_from_camera.topRightCorner<3, 1>() =
      lin * cam.center() + similarity.topRightCorner<3, 1>();
  return out;
}

nlohmann::json canonicalization_sidecar(const Canonicalization& result, const PlaneFit& ground,
                                        const CircleFit& stand, std::uint64_t seed) {
  std::vector<double> m(16);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m[r * 4 + c] = result.transform(r, c);
  }
  const auto vec = [](const Vec3& v) { return std::vector<double>{v.x(), v.y(), v.z()}; };
  return {{"transform", m},
          {"scale", result.scale},
          {"ground",
           {{"normal", vec(ground.plane.normal)},
            {"offset", ground.plane.offset},
            {"inliers", ground.inliers},
            {"rms_residual", ground.rms_residual}}},
          {"stand",
           {{"center", vec(stand.circle.center)},
            {"radius", stand.circle.radius},
            {"candidates", stand.candidates},
            {"inliers", stand.inliers},
            {"rms_residual", stand.rms_residual}}},
          {"cropped_vertices", result.cropped_vertices},
          {"cropped_faces", result.cropped_faces},
          {"seed", seed}};
}

std::vector<Vec3> sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.empty()) throw ParameterError("sample_surface: empty mesh");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  if (!(total > 0.0)) throw ParameterError("sample_surface: mesh has zero area");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto f = static_cast<std::size_t>(it - cumulative.begin());
    const double r1 = std::sqrt(unit(rng)), r2 = unit(rng);
    samples.push_back((1.0 - r1) * mesh.corner(f, 0) + r1 * (1.0 - r2) * mesh.corner(f, 1) +
                      r1 * r2 * mesh.corner(f, 2));
  }
  return samples;
}

HausdorffResult hausdorff(const TriMesh& a, const TriMesh& b, std::size_t n_samples,
                          std::uint64_t seed) {
  if (a.empty() || b.empty()) throw ParameterError("hausdorff: empty mesh");
  if (n_samples < 1) throw ParameterError("hausdorff: need at least one sample");
  const auto samples = sample_surface(a, n_samples, seed);
  const MeshBvh bvh(b);
  Eigen::AlignedBox3d box;
  box.setEmpty();
  for (const auto& v : b.vertices) box.extend(v);
  // Samples lying on B itself come back with round-off sized distances.
  const double zero_tol = 1e-12 * std::max(box.diagonal().norm(), 1.0);

  HausdorffResult out;
  out.per_sample.resize(samples.size());
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (samples.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t end = std::min(samples.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      const double d = bvh.closest(samples[i]).distance;
      out.per_sample[i] = d <= zero_tol ? 0.0 : d;
    }
  });
  double sum = 0.0;
  for (double d : out.per_sample) {
    out.max = std::max(out.max, d);
    sum += d;
  }
  out.mean = sum / static_cast<double>(out.per_sample.size());
  return out;
}

HausdorffResult hausdorff_symmetric(const TriMesh& a, const TriMesh& b, std::size_t n_samples,
                                    std::uint64_t seed) {
  auto ab = hausdorff(a, b, n_samples, seed);
  const auto ba = hausdorff(b, a, n_samples, seed + 1);
  HausdorffResult out;
  out.max = std::max(ab.max, ba.max);
  out.mean = 0.5 * (ab.mean + ba.mean);
  out.per_sample = std::move(ab.per_sample);
  out.per_sample.insert(out.per_sample.end(), ba.per_sample.begin(), ba.per_sample.end());
  return out;
}

}  // namespace slm
