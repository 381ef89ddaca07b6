#include "slm/spatial.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "slm/errors.hpp"

namespace slm {

ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                       const Vec3& c) {
  // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {a, {1, 0, 0}};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {b, {0, 1, 0}};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double denom = d1 - d3;
    const double v = denom > 0.0 ? d1 / denom : 0.0;
    return {a + v * ab, {1 - v, v, 0}};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {c, {0, 0, 1}};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double denom = d2 - d6;
    const double w = denom > 0.0 ? d2 / denom : 0.0;
    return {a + w * ac, {1 - w, 0, w}};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double denom = (d4 - d3) + (d5 - d6);
    const double w = denom > 0.0 ? (d4 - d3) / denom : 0.0;
    return {b + w * (c - b), {0, 1 - w, w}};
  }

  const double sum = va + vb + vc;
  if (!(sum > 0.0)) {
    // Degenerate triangle: fall back to the closest of its three edges.
    ClosestPoint best{a, {1, 0, 0}};
    double best_d = (p - a).squaredNorm();
    const auto edge = [&](const Vec3& s, const Vec3& e, int i, int j) {
      const Vec3 d = e - s;
      const double len2 = d.squaredNorm();
      const double t = len2 > 0.0 ? std::clamp((p - s).dot(d) / len2, 0.0, 1.0) : 0.0;
      const Vec3 q = s + t * d;
      const double dist = (p - q).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        Vec3 bary = Vec3::Zero();
        bary[i] = 1 - t;
        bary[j] = t;
        best = {q, bary};
      }
    };
    edge(a, b, 0, 1);
    edge(b, c, 1, 2);
    edge(a, c, 0, 2);
    return best;
  }
  const double v = vb / sum, w = vc / sum;
  return {a + ab * v + ac * w, {1 - v - w, v, w}};
}

namespace {

double box_distance2(const Eigen::AlignedBox3d& box, const Vec3& p) {
  const Vec3 d = (box.min() - p).cwiseMax(p - box.max()).cwiseMax(0.0);
  return d.squaredNorm();
}

}  // namespace

MeshBvh::MeshBvh(const TriMesh& mesh) : mesh_(&mesh) {
  if (mesh.faces.empty()) throw ParameterError("MeshBvh: mesh has no faces");
  const int n = static_cast<int>(mesh.faces.size());
  std::vector<Eigen::AlignedBox3d> boxes(n);
  std::vector<Vec3> centers(n);
  for (int f = 0; f < n; ++f) {
    boxes[f].setEmpty();
    for (int k = 0; k < 3; ++k) boxes[f].extend(mesh.corner(f, k));
    centers[f] = boxes[f].center();
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * n / 4 + 2);
  build(0, n, boxes, centers);
}

int MeshBvh::build(int first, int count, std::vector<Eigen::AlignedBox3d>& boxes,
                   std::vector<Vec3>& centers) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  box.setEmpty();
  Eigen::AlignedBox3d center_box;
  center_box.setEmpty();
  for (int i = first; i < first + count; ++i) {
    box.extend(boxes[order_[i]]);
    center_box.extend(centers[order_[i]]);
  }
  nodes_[index].box = box;
  constexpr int kLeafSize = 4;
  if (count <= kLeafSize) {
    nodes_[index].first = first;
    nodes_[index].count = count;
    return index;
  }
  int axis = 0;
  center_box.sizes().maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](int a, int b) { return centers[a][axis] < centers[b][axis]; });
  const int left = build(first, mid - first, boxes, centers);
  const int right = build(mid, first + count - mid, boxes, centers);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

MeshBvh::Hit MeshBvh::closest(const Vec3& p) const {
  Hit best;
  double best_d2 = std::numeric_limits<double>::infinity();
  std::vector<int> stack;
  stack.reserve(64);
  stack.push_back(0);
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (box_distance2(node.box, p) >= best_d2) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const int f = order_[i];
        const auto cp = closest_point_on_triangle(p, mesh_->corner(f, 0), mesh_->corner(f, 1),
                                                  mesh_->corner(f, 2));
        const double d2 = (cp.point - p).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best.face = f;
          best.point = cp.point;
          best.barycentric = cp.barycentric;
        }
      }
      continue;
    }
    const double dl = box_distance2(nodes_[node.left].box, p);
    const double dr = box_distance2(nodes_[node.right].box, p);
    // Push the farther child first so the nearer one is explored next.
    if (dl < dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

VertexIndex::VertexIndex(const std::vector<Vec3>& points) : points_(points) {
  if (points_.empty()) throw ParameterError("VertexIndex: no points");
  ids_.resize(points_.size());
  std::iota(ids_.begin(), ids_.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(0, static_cast<int>(ids_.size()), 0);
}

int VertexIndex::build(int first, int last, int depth) {
  if (first >= last) return -1;
  const std::uint8_t axis = static_cast<std::uint8_t>(depth % 3);
  const int mid = first + (last - first) / 2;
  std::nth_element(ids_.begin() + first, ids_.begin() + mid, ids_.begin() + last,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back({ids_[mid], -1, -1, axis});
  const int left = build(first, mid, depth + 1);
  const int right = build(mid + 1, last, depth + 1);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

void VertexIndex::search(int node, const Vec3& p, double& best_d2, int& best) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& q = points_[n.point];
  const double d2 = (q - p).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best_d2 = d2;
    best = n.point;
  }
  const double diff = p[n.axis] - q[n.axis];
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, p, best_d2, best);
  // `<=` keeps equal-distance candidates on the far side reachable for the
  // lowest-index tie rule.
  if (diff * diff <= best_d2) search(far, p, best_d2, best);
}

int VertexIndex::nearest(const Vec3& p) const {
  double best_d2 = std::numeric_limits<double>::infinity();
  int best = -1;
  search(root_, p, best_d2, best);
  return best;
}

}  // namespace slm
