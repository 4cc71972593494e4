#include "fabseg/spatial.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>

namespace fabseg {

// Region-based closest point (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

TriangleTree::TriangleTree(const TriangleMesh& mesh) {
  triangles_.resize(static_cast<std::size_t>(mesh.num_faces()));
  for (Index f = 0; f < mesh.num_faces(); ++f)
    triangles_[f] = {mesh.corner(f, 0), mesh.corner(f, 1), mesh.corner(f, 2)};
  order_.resize(triangles_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * triangles_.size() + 1);
  if (!triangles_.empty()) build(0, static_cast<int>(triangles_.size()));
}

int TriangleTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d centers;
  for (int i = begin; i < end; ++i) {
    const auto& t = triangles_[order_[i]];
    for (const auto& v : t) box.extend(v);
    centers.extend(Vec3((t[0] + t[1] + t[2]) / 3.0));
  }
  nodes_[id].box = box;
  if (end - begin <= 4) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  int axis = 0;
  centers.sizes().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int x, int y) {
    const auto& tx = triangles_[x];
    const auto& ty = triangles_[y];
    const double cx = tx[0][axis] + tx[1][axis] + tx[2][axis];
    const double cy = ty[0][axis] + ty[1][axis] + ty[2][axis];
    return cx < cy || (cx == cy && x < y);
  });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

TriangleTree::Hit TriangleTree::closest(const Vec3& p) const {
  Hit best;
  best.distance = std::numeric_limits<double>::infinity();
  if (nodes_.empty()) return best;
  double best2 = std::numeric_limits<double>::infinity();
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (node.box.squaredExteriorDistance(p) >= best2) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto& t = triangles_[order_[i]];
        const Vec3 q = closest_point_on_triangle(p, t[0], t[1], t[2]);
        const double d2 = (q - p).squaredNorm();
        if (d2 < best2 || (d2 == best2 && order_[i] < best.face)) {
          best2 = d2;
          best.point = q;
          best.face = order_[i];
        }
      }
      continue;
    }
    const double dl = nodes_[node.left].box.squaredExteriorDistance(p);
    const double dr = nodes_[node.right].box.squaredExteriorDistance(p);
    if (dl < dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  best.distance = std::sqrt(best2);
  return best;
}

}  // namespace fabseg
