#include "fabseg/remesh.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <unordered_map>

#include "fabseg/error.hpp"
#include "fabseg/rng.hpp"
#include "fabseg/spatial.hpp"

namespace fabseg {

namespace {

using Quadric = Eigen::Matrix4d;

constexpr double kLengthWeight = 0.1;    // pulls equal-error collapses toward short edges
constexpr double kBoundaryWeight = 100.0;
constexpr double kMinNormalDot = 0.3;
constexpr double kMinQuality = 0.08;
constexpr double kFeatureCos = 0.866;  // creases sharper than 30 degrees stay fixed

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

Quadric plane_quadric(const Vec3& n, const Vec3& point) {
  Eigen::Vector4d plane;
  plane << n, -n.dot(point);
  return plane * plane.transpose();
}

double quadric_error(const Quadric& q, const Vec3& p) {
  Eigen::Vector4d h;
  h << p, 1.0;
  return h.dot(q * h);
}

double triangle_quality(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double area2 = (b - a).cross(c - a).norm();
  const double sum = (b - a).squaredNorm() + (c - b).squaredNorm() + (a - c).squaredNorm();
  return sum > 0.0 ? 2.0 * std::sqrt(3.0) * area2 / sum : 0.0;
}

class Decimator {
 public:
  Decimator(const TriangleMesh& mesh, std::uint64_t seed) : seed_(seed) {
    const auto nv = static_cast<std::size_t>(mesh.num_vertices());
    pos_.resize(nv);
    for (std::size_t v = 0; v < nv; ++v) pos_[v] = mesh.vertex(static_cast<Index>(v));
    if (mesh.vertex_colors) colors_ = *mesh.vertex_colors;
    tri_.resize(static_cast<std::size_t>(mesh.num_faces()));
    for (Index f = 0; f < mesh.num_faces(); ++f) tri_[f] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    face_alive_.assign(tri_.size(), 1);
    vert_alive_.assign(nv, 1);
    vfaces_.assign(nv, {});
    quadric_.assign(nv, Quadric::Zero());
    stamp_.assign(nv, 0);
    boundary_.assign(nv, 0);
    locked_.assign(nv, 0);
    live_faces_ = static_cast<long>(tri_.size());

    for (std::size_t f = 0; f < tri_.size(); ++f) {
      const auto& t = tri_[f];
      const Vec3 n = (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]).normalized();
      const Quadric q = plane_quadric(n, pos_[t[0]]);
      for (int c = 0; c < 3; ++c) {
        vfaces_[t[c]].push_back(static_cast<int>(f));
        quadric_[t[c]] += q;
      }
    }
    const MeshTopology topo = build_topology(mesh);
    for (const auto& e : topo.edges) {
      if (e.faces.size() > 2) {
        locked_[e.v0] = locked_[e.v1] = 1;
      } else if (e.faces.size() == 1) {
        boundary_[e.v0] = boundary_[e.v1] = 1;
        const Vec3 n = face_normal(mesh, e.faces[0]);
        const Vec3 dir = pos_[e.v1] - pos_[e.v0];
        const Vec3 m = dir.cross(n);
        if (m.norm() > 0.0) {
          const Quadric q = kBoundaryWeight * plane_quadric(m.normalized(), pos_[e.v0]);
          quadric_[e.v0] += q;
          quadric_[e.v1] += q;
        }
      }
    }
    for (const auto& e : topo.edges) push_edge(e.v0, e.v1);
  }

  long run(long target) {
    long collapses = 0;
    while (live_faces_ > target && !heap_.empty()) {
      const Candidate c = heap_.top();
      heap_.pop();
      if (!vert_alive_[c.a] || !vert_alive_[c.b]) continue;
      if (stamp_[c.a] != c.stamp_a || stamp_[c.b] != c.stamp_b) continue;
      if (!collapse(c.a, c.b, c.target)) continue;
      ++collapses;
    }
    return collapses;
  }

  long live_faces() const { return live_faces_; }

  TriangleMesh result(const std::string& name) const {
    std::vector<int> remap(pos_.size(), -1);
    int next = 0;
    for (std::size_t f = 0; f < tri_.size(); ++f)
      if (face_alive_[f])
        for (int v : tri_[f]) remap[v] = 0;
    for (auto& r : remap)
      if (r == 0) r = next++;
    TriangleMesh out;
    out.name = name;
    out.vertices.resize(next, 3);
    ColorMatrix colors(colors_.rows() > 0 ? next : 0, 3);
    for (std::size_t v = 0; v < pos_.size(); ++v) {
      if (remap[v] < 0) continue;
      out.vertices.row(remap[v]) = pos_[v];
      if (colors.rows() > 0) colors.row(remap[v]) = colors_.row(static_cast<Index>(v));
    }
    if (colors.rows() > 0) out.vertex_colors = std::move(colors);
    out.faces.resize(live_faces_, 3);
    Index row = 0;
    for (std::size_t f = 0; f < tri_.size(); ++f)
      if (face_alive_[f]) {
        for (int c = 0; c < 3; ++c) out.faces(row, c) = remap[tri_[f][c]];
        ++row;
      }
    return out;
  }

 private:
  struct Candidate {
    double cost;
    std::uint64_t tiebreak;
    int a, b;  // b collapses into a
    std::uint32_t stamp_a, stamp_b;
    Vec3 target;
    bool operator<(const Candidate& o) const {
      // priority_queue is a max-heap; invert for lowest cost first
      if (cost != o.cost) return cost > o.cost;
      return tiebreak > o.tiebreak;
    }
  };

  void push_edge(int a, int b) {
    if (locked_[a] && locked_[b]) return;
    // Keep the constrained endpoint; the other one is removed.
    if (locked_[b] || (boundary_[b] && !boundary_[a])) std::swap(a, b);
    const Quadric q = quadric_[a] + quadric_[b];
    std::array<Vec3, 4> options;
    int count = 0;
    const bool pinned = locked_[a] || (boundary_[a] && !boundary_[b]);
    options[count++] = pos_[a];
    if (!pinned) {
      options[count++] = pos_[b];
      options[count++] = 0.5 * (pos_[a] + pos_[b]);
      const Eigen::Matrix3d A = q.topLeftCorner<3, 3>();
      const Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
      if (lu.rank() == 3 && std::abs(lu.determinant()) > 1e-12 * std::max(1.0, A.squaredNorm() * A.norm())) {
        const Vec3 p = lu.solve(Vec3(-q.block<3, 1>(0, 3)));
        if ((p - options[2]).norm() <= (pos_[a] - pos_[b]).norm()) options[count++] = p;
      }
    }
    double best = std::numeric_limits<double>::infinity();
    Vec3 target = options[0];
    for (int i = 0; i < count; ++i) {
      const double err = quadric_error(q, options[i]);
      // midpoint wins ties so flat regions stay evenly spaced
      if (err < best - 1e-15 || (std::abs(err - best) <= 1e-15 && i == 2)) {
        best = err;
        target = options[i];
      }
    }
    const double cost = std::max(0.0, best) + kLengthWeight * (pos_[a] - pos_[b]).squaredNorm();
    heap_.push({cost, mix_seed(seed_, edge_key(a, b)), a, b, stamp_[a], stamp_[b], target});
  }

  std::vector<int> neighbors(int v) const {
    std::vector<int> out;
    for (int f : vfaces_[v]) {
      if (!face_alive_[f]) continue;
      for (int u : tri_[f])
        if (u != v) out.push_back(u);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool collapse(int a, int b, const Vec3& target) {
    std::vector<int> shared;
    for (int f : vfaces_[a])
      if (face_alive_[f] && (tri_[f][0] == b || tri_[f][1] == b || tri_[f][2] == b)) shared.push_back(f);
    if (shared.empty() || shared.size() > 2) return false;
    const bool edge_on_boundary = shared.size() == 1;
    if (!edge_on_boundary && boundary_[a] && boundary_[b]) return false;
    if (edge_on_boundary && !(boundary_[a] && boundary_[b])) return false;

    const auto na = neighbors(a);
    const auto nb = neighbors(b);
    std::vector<int> common;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
    if (common.size() != shared.size()) return false;
    for (int o : common)
      if (neighbors(o).size() <= 3) return false;
    if (na.size() + nb.size() <= 6) return false;  // would collapse a tetrahedron-like closed piece

    for (int v : {a, b}) {
      for (int f : vfaces_[v]) {
        if (!face_alive_[f] || std::find(shared.begin(), shared.end(), f) != shared.end()) continue;
        std::array<Vec3, 3> p{pos_[tri_[f][0]], pos_[tri_[f][1]], pos_[tri_[f][2]]};
        const Vec3 before = (p[1] - p[0]).cross(p[2] - p[0]);
        for (int c = 0; c < 3; ++c)
          if (tri_[f][c] == a || tri_[f][c] == b) p[c] = target;
        const Vec3 after = (p[1] - p[0]).cross(p[2] - p[0]);
        if (after.norm() < 2.0 * kDegenerateArea) return false;
        if (before.normalized().dot(after.normalized()) < kMinNormalDot) return false;
        if (triangle_quality(p[0], p[1], p[2]) < kMinQuality) return false;
      }
    }

    for (int f : shared) {
      face_alive_[f] = 0;
      --live_faces_;
    }
    for (int f : vfaces_[b]) {
      if (!face_alive_[f]) continue;
      for (auto& v : tri_[f])
        if (v == b) v = a;
      vfaces_[a].push_back(f);
    }
    auto& fa = vfaces_[a];
    fa.erase(std::remove_if(fa.begin(), fa.end(), [&](int f) { return !face_alive_[f]; }), fa.end());
    std::sort(fa.begin(), fa.end());
    fa.erase(std::unique(fa.begin(), fa.end()), fa.end());
    vfaces_[b].clear();
    vert_alive_[b] = 0;
    pos_[a] = target;
    quadric_[a] += quadric_[b];
    boundary_[a] = boundary_[a] || boundary_[b];
    ++stamp_[a];
    ++stamp_[b];
    for (int n : neighbors(a)) push_edge(a, n);
    return true;
  }

  std::uint64_t seed_;
  std::vector<Vec3> pos_;
  ColorMatrix colors_;
  std::vector<std::array<int, 3>> tri_;
  std::vector<char> face_alive_, vert_alive_, boundary_, locked_;
  std::vector<std::vector<int>> vfaces_;
  std::vector<Quadric, Eigen::aligned_allocator<Quadric>> quadric_;
  std::vector<std::uint32_t> stamp_;
  std::priority_queue<Candidate> heap_;
  long live_faces_ = 0;
};

/// Tangential Laplacian smoothing; moved vertices are snapped to the reference.
void smooth_tangential(TriangleMesh& mesh, const TriangleTree& reference, int rounds) {
  const MeshTopology topo = build_topology(mesh);
  const auto nv = static_cast<std::size_t>(mesh.num_vertices());
  std::vector<char> fixed(nv, 0);
  std::vector<std::vector<int>> nbrs(nv);
  for (const auto& e : topo.edges) {
    nbrs[e.v0].push_back(e.v1);
    nbrs[e.v1].push_back(e.v0);
    if (e.faces.size() != 2) {
      fixed[e.v0] = fixed[e.v1] = 1;
    } else if (face_normal(mesh, e.faces[0]).dot(face_normal(mesh, e.faces[1])) < kFeatureCos) {
      fixed[e.v0] = fixed[e.v1] = 1;
    }
  }
  std::vector<std::vector<int>> vfaces(nv);
  for (Index f = 0; f < mesh.num_faces(); ++f)
    for (int c = 0; c < 3; ++c) vfaces[mesh.faces(f, c)].push_back(static_cast<int>(f));

  for (int round = 0; round < rounds; ++round) {
    const VertexMatrix normals = vertex_normals(mesh);
    std::vector<Vec3> proposal(nv);
    for (std::size_t v = 0; v < nv; ++v) {
      proposal[v] = mesh.vertex(static_cast<Index>(v));
      if (fixed[v] || nbrs[v].empty()) continue;
      Vec3 centroid = Vec3::Zero();
      for (int u : nbrs[v]) centroid += mesh.vertex(u);
      centroid /= static_cast<double>(nbrs[v].size());
      const Vec3 n = normals.row(static_cast<Index>(v)).transpose();
      Vec3 d = centroid - proposal[v];
      d -= d.dot(n) * n;
      proposal[v] = reference.closest(proposal[v] + 0.5 * d).point;
    }
    for (std::size_t v = 0; v < nv; ++v) {
      if (fixed[v] || nbrs[v].empty()) continue;
      const Vec3 old = mesh.vertex(static_cast<Index>(v));
      std::vector<Vec3> before;
      for (int f : vfaces[v]) before.push_back(face_normal(mesh, f));
      mesh.vertices.row(static_cast<Index>(v)) = proposal[v];
      bool ok = true;
      for (std::size_t i = 0; i < vfaces[v].size() && ok; ++i) {
        const int f = vfaces[v][i];
        if (face_area(mesh, f) < 2.0 * kDegenerateArea || face_normal(mesh, f).dot(before[i]) < 0.5) ok = false;
      }
      if (!ok) mesh.vertices.row(static_cast<Index>(v)) = old;
    }
  }
}

}  // namespace

TriangleMesh subdivide_midpoint(const TriangleMesh& mesh) {
  const Index nv = mesh.num_vertices();
  std::unordered_map<std::uint64_t, int> midpoints;
  std::vector<Vec3> extra;
  std::vector<Vec3> extra_colors;
  auto midpoint = [&](int a, int b) {
    auto [it, inserted] = midpoints.try_emplace(edge_key(a, b), static_cast<int>(nv + static_cast<Index>(extra.size())));
    if (inserted) {
      extra.push_back(0.5 * (mesh.vertex(a) + mesh.vertex(b)));
      if (mesh.vertex_colors)
        extra_colors.push_back(0.5 * (mesh.vertex_colors->row(a) + mesh.vertex_colors->row(b)).transpose());
    }
    return it->second;
  };
  TriangleMesh out;
  out.name = mesh.name;
  out.faces.resize(4 * mesh.num_faces(), 3);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    const int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
    out.faces.row(4 * f) << a, ab, ca;
    out.faces.row(4 * f + 1) << ab, b, bc;
    out.faces.row(4 * f + 2) << ca, bc, c;
    out.faces.row(4 * f + 3) << ab, bc, ca;
  }
  out.vertices.resize(nv + static_cast<Index>(extra.size()), 3);
  out.vertices.topRows(nv) = mesh.vertices;
  for (std::size_t i = 0; i < extra.size(); ++i) out.vertices.row(nv + static_cast<Index>(i)) = extra[i];
  if (mesh.vertex_colors) {
    ColorMatrix colors(out.vertices.rows(), 3);
    colors.topRows(nv) = *mesh.vertex_colors;
    for (std::size_t i = 0; i < extra_colors.size(); ++i) colors.row(nv + static_cast<Index>(i)) = extra_colors[i];
    out.vertex_colors = std::move(colors);
  }
  return out;
}

TriangleMesh decimate(const TriangleMesh& mesh, long target_faces, std::uint64_t seed, long* collapses) {
  Decimator decimator(mesh, seed);
  const long done = decimator.run(target_faces);
  if (collapses) *collapses = done;
  return decimator.result(mesh.name);
}

TriangleMesh remesh(const TriangleMesh& mesh, const RemeshParams& params, RemeshStats* stats) {
  if (params.target_resolution < 4) throw InvalidArgument("target_resolution must be at least 4");
  if (!(params.tolerance_fraction > 0.0 && params.tolerance_fraction < 0.5))
    throw InvalidArgument("tolerance_fraction must lie in (0, 0.5)");
  if (mesh.num_faces() < 1) throw InvalidArgument("cannot remesh an empty mesh");
  validate(mesh);

  RemeshStats local;
  local.input_faces = mesh.num_faces();
  const long target = params.target_resolution;
  const double low = static_cast<double>(target) * (1.0 - params.tolerance_fraction);
  const double high = static_cast<double>(target) * (1.0 + params.tolerance_fraction);

  TriangleMesh work = compact(mesh);
  while (work.num_faces() < target) {
    work = subdivide_midpoint(work);
    ++local.subdivision_rounds;
  }
  if (work.num_faces() > target) work = decimate(work, target, params.seed, &local.collapses);
  const double achieved = static_cast<double>(work.num_faces());
  if (achieved < low || achieved > high)
    throw RemeshError("target " + std::to_string(target) + " unreachable", work.num_faces());

  if (params.smoothing_rounds > 0) {
    const TriangleTree reference(mesh);
    smooth_tangential(work, reference, params.smoothing_rounds);
  }
  local.output_faces = work.num_faces();
  if (stats) *stats = local;
  return work;
}

}  // namespace fabseg
