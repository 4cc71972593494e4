#include "fabseg/synth.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "fabseg/error.hpp"

namespace fabseg {

namespace {

struct Builder {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> faces;
  FaceTags tags;

  int vertex(const Vec3& p) {
    vertices.push_back(p);
    return static_cast<int>(vertices.size()) - 1;
  }
  void face(int a, int b, int c, int tag = 0) {
    faces.emplace_back(a, b, c);
    tags.push_back(tag);
  }
  void quad(int a, int b, int c, int d, int tag = 0) {
    face(a, b, c, tag);
    face(a, c, d, tag);
  }
  TriangleMesh build(std::string name) const {
    TriangleMesh m;
    m.vertices.resize(static_cast<Index>(vertices.size()), 3);
    for (std::size_t i = 0; i < vertices.size(); ++i) m.vertices.row(static_cast<Index>(i)) = vertices[i].transpose();
    m.faces.resize(static_cast<Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) m.faces.row(static_cast<Index>(i)) = faces[i].transpose();
    m.name = std::move(name);
    return m;
  }
};

}  // namespace

TriangleMesh make_icosphere(int subdivisions, double radius, const Vec3& center) {
  if (subdivisions < 0) throw InvalidArgument("subdivisions must be non-negative");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Eigen::Vector3i> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                    {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                    {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                    {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.emplace_back(tri[0], a, c);
      next.emplace_back(tri[1], b, a);
      next.emplace_back(tri[2], c, b);
      next.emplace_back(a, b, c);
    }
    f = std::move(next);
  }
  Builder b;
  for (const auto& p : v) b.vertex(center + radius * p);
  for (const auto& tri : f) b.face(tri[0], tri[1], tri[2]);
  return b.build("icosphere");
}

TriangleMesh make_box(const Vec3& size, const Vec3& center, int divisions) {
  if (divisions < 1) throw InvalidArgument("box divisions must be positive");
  Builder b;
  std::map<std::tuple<long, long, long>, int> welded;
  const Vec3 half = size / 2.0;
  auto vertex = [&](int i, int j, int k) {
    const auto key = std::make_tuple(long{i}, long{j}, long{k});
    auto it = welded.find(key);
    if (it != welded.end()) return it->second;
    const Vec3 p = center - half + Vec3(size.x() * i / divisions, size.y() * j / divisions, size.z() * k / divisions);
    const int id = b.vertex(p);
    welded.emplace(key, id);
    return id;
  };
  const int n = divisions;
  for (int u = 0; u < n; ++u)
    for (int w = 0; w < n; ++w) {
      // outward winding on each side
      b.quad(vertex(u, w, 0), vertex(u, w + 1, 0), vertex(u + 1, w + 1, 0), vertex(u + 1, w, 0));
      b.quad(vertex(u, w, n), vertex(u + 1, w, n), vertex(u + 1, w + 1, n), vertex(u, w + 1, n));
      b.quad(vertex(u, 0, w), vertex(u + 1, 0, w), vertex(u + 1, 0, w + 1), vertex(u, 0, w + 1));
      b.quad(vertex(u, n, w), vertex(u, n, w + 1), vertex(u + 1, n, w + 1), vertex(u + 1, n, w));
      b.quad(vertex(0, u, w), vertex(0, u, w + 1), vertex(0, u + 1, w + 1), vertex(0, u + 1, w));
      b.quad(vertex(n, u, w), vertex(n, u + 1, w), vertex(n, u + 1, w + 1), vertex(n, u, w + 1));
    }
  return b.build("box");
}

TriangleMesh make_revolved(const std::vector<Eigen::Vector2d>& profile, int segments, bool capped, FaceTags* tags) {
  if (profile.size() < 2) throw InvalidArgument("profile needs at least two points");
  if (segments < 3) throw InvalidArgument("revolution needs at least three segments");
  Builder b;
  const int rows = static_cast<int>(profile.size());
  std::vector<std::vector<int>> ring(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const double radius = profile[r].x(), z = profile[r].y();
    if (radius <= 0.0) {
      ring[r].assign(static_cast<std::size_t>(segments), b.vertex(Vec3(0, 0, z)));
      continue;
    }
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      ring[r].push_back(b.vertex(Vec3(radius * std::cos(a), radius * std::sin(a), z)));
    }
  }
  for (int r = 0; r + 1 < rows; ++r) {
    const bool pole_lo = profile[r].x() <= 0.0, pole_hi = profile[r + 1].x() <= 0.0;
    for (int s = 0; s < segments; ++s) {
      const int t = (s + 1) % segments;
      const int a = ring[r][s], bb = ring[r][t], c = ring[r + 1][t], d = ring[r + 1][s];
      if (pole_lo && pole_hi) continue;
      if (pole_lo) b.face(a, c, d, r);
      else if (pole_hi) b.face(a, bb, c, r);
      else b.quad(a, bb, c, d, r);
    }
  }
  if (capped) {
    if (profile.front().x() > 0.0) {
      const int centre = b.vertex(Vec3(0, 0, profile.front().y()));
      for (int s = 0; s < segments; ++s) b.face(centre, ring[0][(s + 1) % segments], ring[0][s], -1);
    }
    if (profile.back().x() > 0.0) {
      const int centre = b.vertex(Vec3(0, 0, profile.back().y()));
      for (int s = 0; s < segments; ++s) b.face(centre, ring[rows - 1][s], ring[rows - 1][(s + 1) % segments], -2);
    }
  }
  if (tags) *tags = b.tags;
  return b.build("revolved");
}

TriangleMesh make_cylinder(double radius, double height, int segments, int rings, bool capped) {
  if (rings < 1) throw InvalidArgument("cylinder needs at least one ring span");
  std::vector<Eigen::Vector2d> profile;
  for (int i = 0; i <= rings; ++i) profile.emplace_back(radius, -height / 2.0 + height * i / rings);
  TriangleMesh m = make_revolved(profile, segments, capped);
  m.name = "cylinder";
  return m;
}

TriangleMesh make_torus(double major_radius, double minor_radius, int major_segments, int minor_segments) {
  if (major_segments < 3 || minor_segments < 3) throw InvalidArgument("torus needs at least 3x3 segments");
  Builder b;
  for (int i = 0; i < major_segments; ++i)
    for (int j = 0; j < minor_segments; ++j) {
      const double u = 2.0 * std::numbers::pi * i / major_segments, v = 2.0 * std::numbers::pi * j / minor_segments;
      const double r = major_radius + minor_radius * std::cos(v);
      b.vertex(Vec3(r * std::cos(u), r * std::sin(u), minor_radius * std::sin(v)));
    }
  auto id = [&](int i, int j) { return (i % major_segments) * minor_segments + (j % minor_segments); };
  for (int i = 0; i < major_segments; ++i)
    for (int j = 0; j < minor_segments; ++j) b.quad(id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
  return b.build("torus");
}

TriangleMesh make_star(int subdivisions, int arms, double reach) {
  if (arms < 1) throw InvalidArgument("star needs at least one arm");
  TriangleMesh m = make_icosphere(subdivisions);
  for (Index v = 0; v < m.num_vertices(); ++v) {
    const Vec3 p = m.vertex(v);
    double pull = 0.0;
    for (int a = 0; a < arms; ++a) {
      const double angle = 2.0 * std::numbers::pi * a / arms;
      const double d = std::max(0.0, p.dot(Vec3(std::cos(angle), std::sin(angle), 0.0)));
      pull += std::pow(d, 8.0);
    }
    m.vertices.row(v) = (p * (1.0 + reach * pull)).transpose();
  }
  m.name = "star";
  return m;
}

TriangleMesh make_fan(int count, double radius) {
  if (count < 1) throw InvalidArgument("fan needs at least one face");
  Builder b;
  const int centre = b.vertex(Vec3::Zero());
  std::vector<int> rim;
  const bool closed = count >= 3;
  const int points = closed ? count : count + 1;
  for (int i = 0; i < points; ++i) {
    const double a = 2.0 * std::numbers::pi * i / (closed ? count : 4 * count);
    rim.push_back(b.vertex(Vec3(radius * std::cos(a), radius * std::sin(a), 0.0)));
  }
  for (int i = 0; i < count; ++i) b.face(centre, rim[i], rim[(i + 1) % points]);
  return b.build("fan");
}

TriangleMesh make_strip() {
  Builder b;
  const int v0 = b.vertex(Vec3(0, 0, 0)), v1 = b.vertex(Vec3(1, 0, 0)), v2 = b.vertex(Vec3(0, 1, 0));
  const int v3 = b.vertex(Vec3(1, 1, 0)), v4 = b.vertex(Vec3(2, 0, 0));
  b.face(v0, v1, v2);
  b.face(v1, v3, v2);
  b.face(v1, v4, v3);
  return b.build("strip");
}

TriangleMesh make_bridged_cubes(FaceTags* tags) {
  Builder b;
  auto cube = [&](double x0, int tag) {
    std::vector<int> c;
    for (int i = 0; i < 8; ++i) c.push_back(b.vertex(Vec3(x0 + (i & 1), (i >> 1) & 1, (i >> 2) & 1)));
    b.quad(c[0], c[2], c[3], c[1], tag);  // z = 0
    b.quad(c[4], c[5], c[7], c[6], tag);  // z = 1
    b.quad(c[0], c[1], c[5], c[4], tag);  // y = 0
    b.quad(c[2], c[6], c[7], c[3], tag);  // y = 1
    b.quad(c[0], c[4], c[6], c[2], tag);  // x = x0
    b.quad(c[1], c[3], c[7], c[5], tag);  // x = x0 + 1
    return c;
  };
  const auto a = cube(0.0, 0);
  const auto c = cube(3.0, 1);
  // thin strip in the y = 0 plane from the right edge of one cube to the left edge of the other
  const int m0 = b.vertex(Vec3(2.0, 0.0, 0.45)), m1 = b.vertex(Vec3(2.0, 0.0, 0.55));
  b.quad(a[1], m0, m1, a[5], 2);
  b.quad(m0, c[0], c[4], m1, 2);
  if (tags) *tags = b.tags;
  return b.build("bridged_cubes");
}

TriangleMesh transformed(const TriangleMesh& mesh, const Eigen::Affine3d& transform) {
  TriangleMesh out = mesh;
  for (Index v = 0; v < mesh.num_vertices(); ++v) out.vertices.row(v) = (transform * mesh.vertex(v)).transpose();
  return out;
}

TriangleMesh permute_faces(const TriangleMesh& mesh, const std::vector<int>& order) {
  if (static_cast<Index>(order.size()) != mesh.num_faces()) throw InvalidArgument("permutation size mismatch");
  TriangleMesh out = mesh;
  for (std::size_t i = 0; i < order.size(); ++i) out.faces.row(static_cast<Index>(i)) = mesh.faces.row(order[i]);
  return out;
}

}  // namespace fabseg
