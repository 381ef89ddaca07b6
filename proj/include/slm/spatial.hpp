#pragma once

#include <cstdint>
#include <vector>

#include "slm/mesh.hpp"

namespace slm {

struct ClosestPoint {
  Vec3 point;
  Vec3 barycentric;  // weights of the triangle corners
};

/// Exact closest point on triangle (a, b, c) to p, including degenerate
/// triangles.
ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Axis-aligned bounding-volume hierarchy over the faces of a mesh, answering
/// exact point-to-surface queries.
class MeshBvh {
 public:
  struct Hit {
    double distance = 0.0;
    int face = -1;
    Vec3 point;
    Vec3 barycentric;
  };

  explicit MeshBvh(const TriMesh& mesh);

  /// Closest surface point. The mesh must outlive the hierarchy.
  Hit closest(const Vec3& p) const;

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1;   // child index, or -1 for a leaf
    int right = -1;
    int first = 0;   // leaf: range into order_
    int count = 0;
  };
  int build(int first, int count, std::vector<Eigen::AlignedBox3d>& boxes,
            std::vector<Vec3>& centers);

  const TriMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
};

/// KD-tree over mesh vertices. Queries return the Euclidean-nearest vertex,
/// breaking exact distance ties by lowest index.
class VertexIndex {
 public:
  explicit VertexIndex(const std::vector<Vec3>& points);
  int nearest(const Vec3& p) const;

 private:
  struct Node {
    int point = -1;
    int left = -1;
    int right = -1;
    std::uint8_t axis = 0;
  };
  int build(int first, int last, int depth);
  void search(int node, const Vec3& p, double& best_d2, int& best) const;

  std::vector<Vec3> points_;
  std::vector<int> ids_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace slm
