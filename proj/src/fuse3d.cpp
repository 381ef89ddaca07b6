#include "slm/fuse3d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "slm/errors.hpp"
#include "slm/fileio.hpp"
#include "slm/spatial.hpp"

namespace slm {

std::optional<Sighting3D> lift(const Detection2D& det, const DepthImage& depth,
                               const SubjectMask& mask, const CameraRecord& cam) {
  if (depth.width() != mask.width() || depth.height() != mask.height()) {
    throw ParameterError("lift: depth and mask sizes differ");
  }
  const double cx = det.bbox.cx(), cy = det.bbox.cy();
  const int px = static_cast<int>(std::floor(cx + 0.5));
  const int py = static_cast<int>(std::floor(cy + 0.5));
  const auto usable = [&](int x, int y) {
    return mask.contains(x, y) && mask.at(x, y) && std::isfinite(depth.at(x, y));
  };
  if (usable(px, py)) {
    return Sighting3D{det.image_id, det.det_id, unproject(Vec2(cx, cy), depth.at(px, py), cam),
                      LiftStatus::center_hit};
  }

  // Pixels whose centers lie inside the (closed) box.
  const int x0 = std::max(0, static_cast<int>(std::ceil(det.bbox.x)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(det.bbox.y)));
  const int x1 = std::min(mask.width() - 1, static_cast<int>(std::floor(det.bbox.x + det.bbox.w)));
  const int y1 = std::min(mask.height() - 1, static_cast<int>(std::floor(det.bbox.y + det.bbox.h)));
  if (x0 > x1 || y0 > y1) return std::nullopt;

  const int max_ring = std::max({std::abs(px - x0), std::abs(px - x1), std::abs(py - y0),
                                 std::abs(py - y1)});
  double best_d2 = std::numeric_limits<double>::infinity();
  int best_x = -1, best_y = -1;
  const auto consider = [&](int x, int y) {
    if (x < x0 || x > x1 || y < y0 || y > y1 || !usable(x, y)) return;
    const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    if (d2 < best_d2 || (d2 == best_d2 && (y < best_y || (y == best_y && x < best_x)))) {
      best_d2 = d2;
      best_x = x;
      best_y = y;
    }
  };
  // Square rings around the center pixel; a ring at Chebyshev radius r is at
  // least r - 0.5 from the continuous center.
  for (int r = 0; r <= max_ring; ++r) {
    if (best_x >= 0 && (r - 0.5) * (r - 0.5) > best_d2) break;
    if (r == 0) {
      consider(px, py);
      continue;
    }
    for (int d = -r; d <= r; ++d) {
      consider(px + d, py - r);
      consider(px + d, py + r);
    }
    for (int d = -r + 1; d <= r - 1; ++d) {
      consider(px - r, py + d);
      consider(px + r, py + d);
    }
  }
  if (best_x < 0) return std::nullopt;
  return Sighting3D{det.image_id, det.det_id,
                    unproject(Vec2(best_x, best_y), depth.at(best_x, best_y), cam),
                    LiftStatus::fallback_hit};
}

Clustering cluster_points(const std::vector<Vec3>& points, double distance_threshold,
                          std::size_t min_cluster_size) {
  if (!(distance_threshold > 0.0)) throw ParameterError("cluster: threshold must be positive");
  const std::size_t n = points.size();
  Clustering out;
  if (n == 0) return out;

  // Nearest-neighbor chain over the average-linkage dissimilarity, updated
  // with the Lance-Williams rule. Average linkage is reducible, so the
  // merges found this way form the same dendrogram as greedy agglomeration.
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = (points[i] - points[j]).norm();
    }
  }
  std::vector<std::size_t> size(n, 1);
  std::vector<char> active(n, 1);
  struct Merge {
    std::size_t a, b;
    double height;
  };
  std::vector<Merge> merges;
  merges.reserve(n - 1);
  std::vector<std::size_t> chain;
  std::size_t remaining = n;
  while (remaining > 1) {
    if (chain.empty()) {
      std::size_t first = 0;
      while (!active[first]) ++first;
      chain.push_back(first);
    }
    const std::size_t a = chain.back();
    const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
    std::size_t b = n;
    double best = std::numeric_limits<double>::infinity();
    if (prev < n) {
      b = prev;
      best = dist[a * n + prev];
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a) continue;
      if (dist[a * n + k] < best) {
        best = dist[a * n + k];
        b = k;
      }
    }
    if (b != prev) {
      chain.push_back(b);
      continue;
    }
    chain.pop_back();
    chain.pop_back();
    merges.push_back({a, b, best});
    // The merged cluster keeps slot `keep`; slot `drop` retires.
    const std::size_t keep = std::min(a, b), drop = std::max(a, b);
    const double wa = static_cast<double>(size[keep]), wb = static_cast<double>(size[drop]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == keep || k == drop) continue;
      const double d = (wa * dist[keep * n + k] + wb * dist[drop * n + k]) / (wa + wb);
      dist[keep * n + k] = dist[k * n + keep] = d;
    }
    size[keep] += size[drop];
    active[drop] = 0;
    --remaining;
  }

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& m : merges) {
    if (m.height <= distance_threshold) parent[find(m.a)] = find(m.b);
  }
  std::vector<std::vector<std::size_t>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> ordered;
  for (auto& g : groups) {
    if (!g.empty()) ordered.push_back(std::move(g));
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& x, const auto& y) { return x.front() < y.front(); });
  for (auto& g : ordered) {
    (g.size() >= min_cluster_size ? out.clusters : out.rejected).push_back(std::move(g));
  }
  return out;
}

Clustering cluster(const std::vector<Sighting3D>& sightings, double distance_threshold,
                   std::size_t min_cluster_size) {
  std::vector<Vec3> points;
  points.reserve(sightings.size());
  for (const auto& s : sightings) points.push_back(s.point);
  return cluster_points(points, distance_threshold, min_cluster_size);
}

std::vector<GlobalLesion> build_registry(const std::vector<Sighting3D>& sightings,
                                         const std::vector<std::vector<std::size_t>>& clusters,
                                         const TriMesh& mesh) {
  std::vector<GlobalLesion> lesions;
  if (clusters.empty()) return lesions;
  if (mesh.vertices.empty()) throw ParameterError("build_registry: empty mesh");
  const VertexIndex index(mesh.vertices);
  std::vector<Vec3> normals = mesh.vertex_normals;
  if (normals.size() != mesh.vertices.size()) {
    TriMesh copy = mesh;
    copy.compute_normals();
    normals = copy.vertex_normals;
  }
  for (const auto& members : clusters) {
    if (members.empty()) continue;
    GlobalLesion lesion;
    for (auto i : members) {
      lesion.centroid += sightings.at(i).point;
      lesion.members.push_back({sightings[i].image_id, sightings[i].det_id});
    }
    lesion.centroid /= static_cast<double>(members.size());
    std::sort(lesion.members.begin(), lesion.members.end(), [](const auto& a, const auto& b) {
      return a.image_id != b.image_id ? a.image_id < b.image_id : a.det_id < b.det_id;
    });
    lesion.nearest_vertex = index.nearest(lesion.centroid);
    lesion.normal = normals[lesion.nearest_vertex];
    lesions.push_back(std::move(lesion));
  }
  std::sort(lesions.begin(), lesions.end(), [](const GlobalLesion& a, const GlobalLesion& b) {
    if (a.centroid.y() != b.centroid.y()) return a.centroid.y() < b.centroid.y();
    return std::atan2(a.centroid.x(), a.centroid.z()) < std::atan2(b.centroid.x(), b.centroid.z());
  });
  for (std::size_t i = 0; i < lesions.size(); ++i) lesions[i].global_id = static_cast<int>(i) + 1;
  return lesions;
}

namespace {

nlohmann::json members_json(const std::vector<LesionMember>& members) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : members) arr.push_back({{"image_id", m.image_id}, {"det_id", m.det_id}});
  return arr;
}

std::vector<LesionMember> members_from(const nlohmann::json& arr) {
  std::vector<LesionMember> out;
  for (const auto& m : arr) out.push_back({m.at("image_id").get<std::string>(), m.at("det_id").get<int>()});
  return out;
}

Vec3 vec3_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw FormatError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

}  // namespace

nlohmann::json registry_to_json(const LesionRegistry& registry) {
  nlohmann::json lesions = nlohmann::json::array();
  for (const auto& l : registry.lesions) {
    lesions.push_back({{"global_id", l.global_id},
                       {"centroid", {l.centroid.x(), l.centroid.y(), l.centroid.z()}},
                       {"normal", {l.normal.x(), l.normal.y(), l.normal.z()}},
                       {"nearest_vertex", l.nearest_vertex},
                       {"members", members_json(l.members)}});
  }
  nlohmann::json rejected = nlohmann::json::array();
  for (const auto& r : registry.rejected) rejected.push_back({{"members", members_json(r)}});
  return {{"lesions", lesions},
          {"rejected", rejected},
          {"off_subject", members_json(registry.off_subject)}};
}

LesionRegistry registry_from_json(const nlohmann::json& j) {
  LesionRegistry registry;
  try {
    for (const auto& l : j.at("lesions")) {
      GlobalLesion lesion;
      lesion.global_id = l.at("global_id").get<int>();
      lesion.centroid = vec3_from(l.at("centroid"));
      lesion.normal = vec3_from(l.at("normal"));
      lesion.nearest_vertex = l.at("nearest_vertex").get<int>();
      lesion.members = members_from(l.at("members"));
      registry.lesions.push_back(std::move(lesion));
    }
    if (j.contains("rejected")) {
      for (const auto& r : j.at("rejected")) registry.rejected.push_back(members_from(r.at("members")));
    }
    if (j.contains("off_subject")) registry.off_subject = members_from(j.at("off_subject"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("lesion registry: ") + e.what());
  }
  return registry;
}

LesionRegistry read_registry(const std::filesystem::path& path) {
  return registry_from_json(read_json(path));
}

void write_registry(const std::filesystem::path& path, const LesionRegistry& registry) {
  write_json(path, registry_to_json(registry));
}

}  // namespace slm
