#pragma once

#include <Eigen/Geometry>
#include <array>
#include <vector>

#include "fabseg/mesh.hpp"

namespace fabseg {

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Bounding-volume hierarchy over a mesh's triangles for closest-point queries.
/// Holds a copy of the geometry, so it outlives the source mesh.
class TriangleTree {
 public:
  struct Hit {
    Vec3 point = Vec3::Zero();
    double distance = 0.0;
    int face = -1;
  };

  explicit TriangleTree(const TriangleMesh& mesh);

  Hit closest(const Vec3& p) const;
  std::size_t size() const { return triangles_.size(); }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1;  // children, or -1 for a leaf
    int right = -1;
    int begin = 0;  // leaf triangle range in order_
    int end = 0;
  };

  int build(int begin, int end);

  std::vector<std::array<Vec3, 3>> triangles_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace fabseg
