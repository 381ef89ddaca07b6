#include "slm/track.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>

#include "slm/errors.hpp"
#include "slm/fileio.hpp"
#include "slm/parallel.hpp"
#include "slm/spatial.hpp"

namespace slm {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

int snap_to_vertex(const Vec3& point, const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw ParameterError("snap_to_vertex: empty mesh");
  return VertexIndex(mesh.vertices).nearest(point);
}

MeshGraph::MeshGraph(const TriMesh& mesh) {
  const auto edges = mesh_edges(mesh);
  const std::size_t n = mesh.vertices.size();
  offsets_.assign(n + 1, 0);
  for (const auto& e : edges) {
    ++offsets_[e[0] + 1];
    ++offsets_[e[1] + 1];
  }
  for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] += offsets_[i];
  neighbors_.resize(offsets_[n]);
  weights_.resize(offsets_[n]);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& e : edges) {
    const double w = (mesh.vertices[e[0]] - mesh.vertices[e[1]]).norm();
    neighbors_[fill[e[0]]] = e[1];
    weights_[fill[e[0]]++] = w;
    neighbors_[fill[e[1]]] = e[0];
    weights_[fill[e[1]]++] = w;
  }
}

std::vector<double> MeshGraph::distances(int source, const std::vector<int>& targets) const {
  const std::size_t n = size();
  if (source < 0 || static_cast<std::size_t>(source) >= n) {
    throw ParameterError("geodesic: source vertex out of range");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= n) {
      throw ParameterError("geodesic: target vertex out of range");
    }
  }
  std::vector<double> dist(n, kInf);
  std::vector<char> settled(n, 0);
  std::vector<char> wanted(n, 0);
  std::size_t pending = 0;
  for (int t : targets) {
    if (!wanted[t]) {
      wanted[t] = 1;
      ++pending;
    }
  }
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.push({0.0, source});
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (settled[u]) continue;
    settled[u] = 1;
    if (wanted[u] && --pending == 0) break;
    for (std::size_t k = offsets_[u]; k < offsets_[u + 1]; ++k) {
      const int v = neighbors_[k];
      const double nd = d + weights_[k];
      if (nd < dist[v]) {
        dist[v] = nd;
        queue.push({nd, v});
      }
    }
  }
  return dist;
}

std::vector<double> geodesic(const TriMesh& mesh, int source, const std::vector<int>& targets) {
  const auto dist = MeshGraph(mesh).distances(source, targets);
  std::vector<double> out;
  out.reserve(targets.size());
  for (int t : targets) out.push_back(dist[t]);
  return out;
}

void CorrespondenceMap::validate(std::size_t vertices_a, std::size_t vertices_b) const {
  if (pairs.size() != vertices_a) {
    throw ParameterError("correspondence: expected " + std::to_string(vertices_a) +
                         " entries, got " + std::to_string(pairs.size()));
  }
  for (int p : pairs) {
    if (p < 0 || static_cast<std::size_t>(p) >= vertices_b) {
      throw ParameterError("correspondence: vertex index out of range");
    }
  }
}

CorrespondenceMap identity_correspondence(std::size_t n, const std::string& mesh_a_id,
                                          const std::string& mesh_b_id) {
  CorrespondenceMap corr{mesh_a_id, mesh_b_id, std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) corr.pairs[i] = static_cast<int>(i);
  return corr;
}

int transfer(int vertex_in_a, const CorrespondenceMap& corr) {
  if (vertex_in_a < 0 || static_cast<std::size_t>(vertex_in_a) >= corr.pairs.size()) {
    throw ParameterError("transfer: vertex out of range");
  }
  return corr.pairs[vertex_in_a];
}

void to_json(nlohmann::json& j, const CorrespondenceMap& corr) {
  j = {{"mesh_a_id", corr.mesh_a_id}, {"mesh_b_id", corr.mesh_b_id}, {"pairs", corr.pairs}};
}

void from_json(const nlohmann::json& j, CorrespondenceMap& corr) {
  try {
    corr.mesh_a_id = j.at("mesh_a_id").get<std::string>();
    corr.mesh_b_id = j.at("mesh_b_id").get<std::string>();
    corr.pairs = j.at("pairs").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("correspondence: ") + e.what());
  }
}

CorrespondenceMap read_correspondence(const std::filesystem::path& path) {
  return read_json(path).get<CorrespondenceMap>();
}

void write_correspondence(const std::filesystem::path& path, const CorrespondenceMap& corr) {
  write_json(path, nlohmann::json(corr));
}

std::vector<int> solve_assignment(const std::vector<double>& cost, std::size_t rows,
                                  std::size_t cols) {
  if (cost.size() != rows * cols) throw ParameterError("assignment: cost size mismatch");
  if (rows == 0) return {};
  if (cols == 0) return std::vector<int>(rows, -1);
  if (rows > cols) {
    std::vector<double> transposed(cost.size());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) transposed[c * rows + r] = cost[r * cols + c];
    }
    const auto by_col = solve_assignment(transposed, cols, rows);
    std::vector<int> out(rows, -1);
    for (std::size_t c = 0; c < cols; ++c) out[by_col[c]] = static_cast<int>(c);
    return out;
  }
  // Shortest augmenting paths with potentials (rows <= cols), 1-based.
  const std::size_t n = rows, m = cols;
  const auto a = [&](std::size_t i, std::size_t j) { return cost[(i - 1) * cols + (j - 1)]; };
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(rows, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) out[p[j] - 1] = static_cast<int>(j - 1);
  }
  return out;
}

std::vector<LesionMatch> match_lesions(const std::vector<GlobalLesion>& lesions_t,
                                       const std::vector<GlobalLesion>& lesions_t1,
                                       const CorrespondenceMap& corr, const TriMesh& mesh_t1,
                                       double max_geodesic) {
  if (lesions_t.empty() || lesions_t1.empty()) return {};
  if (!(max_geodesic >= 0.0)) throw ParameterError("match_lesions: max_geodesic must be >= 0");
  const MeshGraph graph(mesh_t1);
  std::vector<int> targets;
  for (const auto& l : lesions_t1) targets.push_back(l.nearest_vertex);

  const std::size_t rows = lesions_t.size(), cols = lesions_t1.size();
  std::vector<double> residual(rows * cols, kInf);
  parallel_for(rows, [&](std::size_t r) {
    const int source = transfer(lesions_t[r].nearest_vertex, corr);
    const auto dist = graph.distances(source, targets);
    for (std::size_t c = 0; c < cols; ++c) residual[r * cols + c] = dist[targets[c]];
  });

  // Unreachable pairs get a cost larger than any finite total.
  double finite_sum = 0.0;
  for (double d : residual) {
    if (std::isfinite(d)) finite_sum += d;
  }
  const double unreachable = 2.0 * finite_sum + 1.0;
  std::vector<double> cost(residual);
  for (double& d : cost) {
    if (!std::isfinite(d)) d = unreachable;
  }
  const auto assigned = solve_assignment(cost, rows, cols);

  std::vector<LesionMatch> out;
  out.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    LesionMatch m;
    m.lesion_t = lesions_t[r].global_id;
    if (assigned[r] >= 0) {
      m.lesion_t1 = lesions_t1[assigned[r]].global_id;
      m.geodesic_residual = residual[r * cols + assigned[r]];
      m.matched = m.geodesic_residual <= max_geodesic;
    }
    out.push_back(m);
  }
  return out;
}

double longitudinal_accuracy(const std::vector<LesionMatch>& predicted,
                             const std::vector<LesionMatch>& ground_truth) {
  if (ground_truth.empty()) {
    throw UndefinedMetricError("longitudinal accuracy: ground truth is empty");
  }
  std::set<std::pair<int, int>> found;
  for (const auto& m : predicted) {
    if (m.matched) found.insert({m.lesion_t, m.lesion_t1});
  }
  std::size_t correct = 0;
  for (const auto& g : ground_truth) correct += found.count({g.lesion_t, g.lesion_t1});
  return static_cast<double>(correct) / static_cast<double>(ground_truth.size());
}

std::map<int, int> label_lesions(const std::vector<GlobalLesion>& lesions,
                                 const std::vector<GlobalLesion>& reference, double tolerance) {
  struct Candidate {
    double distance;
    std::size_t lesion, ref;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < lesions.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      const double d = (lesions[i].centroid - reference[j].centroid).norm();
      if (d <= tolerance) candidates.push_back({d, i, j});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.lesion != b.lesion ? a.lesion < b.lesion : a.ref < b.ref;
  });
  std::vector<char> used_lesion(lesions.size(), 0), used_ref(reference.size(), 0);
  std::map<int, int> labels;
  for (const auto& c : candidates) {
    if (used_lesion[c.lesion] || used_ref[c.ref]) continue;
    used_lesion[c.lesion] = used_ref[c.ref] = 1;
    labels[lesions[c.lesion].global_id] = reference[c.ref].global_id;
  }
  return labels;
}

std::vector<LesionMatch> truth_pairs(const std::map<int, int>& labels_t,
                                     const std::map<int, int>& labels_t1) {
  std::map<int, int> by_label_t1;
  for (const auto& [gid, label] : labels_t1) by_label_t1[label] = gid;
  std::vector<LesionMatch> out;
  for (const auto& [gid, label] : labels_t) {
    const auto it = by_label_t1.find(label);
    if (it != by_label_t1.end()) out.push_back({gid, it->second, 0.0, true});
  }
  return out;
}

FusionReport evaluate_fusion(const std::vector<GlobalLesion>& lesions,
                             const std::vector<GlobalLesion>& truth, double tolerance) {
  FusionReport report;
  report.truth = truth.size();
  const auto labels = label_lesions(lesions, truth, tolerance);
  report.recovered = labels.size();
  report.spurious = lesions.size() - labels.size();
  std::map<int, Vec3> truth_points;
  for (const auto& t : truth) truth_points[t.global_id] = t.centroid;
  double total = 0.0;
  for (const auto& l : lesions) {
    const auto it = labels.find(l.global_id);
    if (it == labels.end()) continue;
    const double e = (l.centroid - truth_points.at(it->second)).norm();
    report.max_centroid_error = std::max(report.max_centroid_error, e);
    total += e;
  }
  if (!labels.empty()) report.mean_centroid_error = total / static_cast<double>(labels.size());
  return report;
}

nlohmann::json tracks_to_json(const TrackResult& result) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& m : result.pairs) {
    nlohmann::json residual = nullptr;
    if (std::isfinite(m.geodesic_residual)) residual = m.geodesic_residual;
    nlohmann::json partner = nullptr;
    if (m.lesion_t1 >= 0) partner = m.lesion_t1;
    pairs.push_back({{"lesion_t", m.lesion_t},
                     {"lesion_t1", partner},
                     {"geodesic_residual", residual},
                     {"matched", m.matched}});
  }
  nlohmann::json j{{"pairs", pairs}};
  if (result.accuracy) j["accuracy"] = *result.accuracy;
  return j;
}

TrackResult tracks_from_json(const nlohmann::json& j) {
  TrackResult result;
  try {
    for (const auto& p : j.at("pairs")) {
      LesionMatch m;
      m.lesion_t = p.at("lesion_t").get<int>();
      if (!p.at("lesion_t1").is_null()) m.lesion_t1 = p.at("lesion_t1").get<int>();
      if (!p.at("geodesic_residual").is_null()) {
        m.geodesic_residual = p.at("geodesic_residual").get<double>();
      }
      m.matched = p.at("matched").get<bool>();
      result.pairs.push_back(m);
    }
    if (j.contains("accuracy") && !j.at("accuracy").is_null()) {
      result.accuracy = j.at("accuracy").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tracks: ") + e.what());
  }
  return result;
}

TrackResult read_tracks(const std::filesystem::path& path) {
  return tracks_from_json(read_json(path));
}

void write_tracks(const std::filesystem::path& path, const TrackResult& result) {
  write_json(path, tracks_to_json(result));
}

}  // namespace slm
