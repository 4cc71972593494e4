#include "fabseg/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "fabseg/error.hpp"

namespace fabseg {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;  // smaller root wins, keeps ids deterministic
  }
};

}  // namespace

void validate(const TriangleMesh& mesh) {
  const Index nv = mesh.num_vertices();
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    if (a < 0 || b < 0 || c < 0 || a >= nv || b >= nv || c >= nv)
      throw InvalidArgument("face " + std::to_string(f) + " references a missing vertex");
    if (a == b || b == c || a == c)
      throw InvalidArgument("face " + std::to_string(f) + " repeats a vertex");
    if (face_area(mesh, f) < kDegenerateArea)
      throw InvalidArgument("face " + std::to_string(f) + " is degenerate");
  }
  if (mesh.vertex_colors && mesh.vertex_colors->rows() != nv)
    throw InvalidArgument("vertex color count does not match vertex count");
  if (!mesh.vertices.allFinite()) throw InvalidArgument("non-finite vertex coordinate");
}

Vec3 face_normal(const TriangleMesh& mesh, Index f) {
  const Vec3 n = (mesh.corner(f, 1) - mesh.corner(f, 0)).cross(mesh.corner(f, 2) - mesh.corner(f, 0));
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double face_area(const TriangleMesh& mesh, Index f) {
  return 0.5 * (mesh.corner(f, 1) - mesh.corner(f, 0)).cross(mesh.corner(f, 2) - mesh.corner(f, 0)).norm();
}

Vec3 face_centroid(const TriangleMesh& mesh, Index f) {
  return (mesh.corner(f, 0) + mesh.corner(f, 1) + mesh.corner(f, 2)) / 3.0;
}

Eigen::VectorXd face_areas(const TriangleMesh& mesh) {
  Eigen::VectorXd areas(mesh.num_faces());
  for (Index f = 0; f < mesh.num_faces(); ++f) areas[f] = face_area(mesh, f);
  return areas;
}

double surface_area(const TriangleMesh& mesh) { return face_areas(mesh).sum(); }

double bounding_box_diagonal(const TriangleMesh& mesh) {
  if (mesh.num_vertices() == 0) return 0.0;
  return (mesh.vertices.colwise().maxCoeff() - mesh.vertices.colwise().minCoeff()).norm();
}

VertexMatrix vertex_normals(const TriangleMesh& mesh) {
  VertexMatrix normals = VertexMatrix::Zero(mesh.num_vertices(), 3);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 n = (mesh.corner(f, 1) - mesh.corner(f, 0)).cross(mesh.corner(f, 2) - mesh.corner(f, 0));
    for (int c = 0; c < 3; ++c) normals.row(mesh.faces(f, c)) += n.transpose();
  }
  for (Index v = 0; v < normals.rows(); ++v) {
    const double len = normals.row(v).norm();
    if (len > 0.0) normals.row(v) /= len;
  }
  return normals;
}

int MeshTopology::find_edge(int a, int b) const {
  if (a > b) std::swap(a, b);
  auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{a, b},
                             [](const EdgeRecord& e, const std::pair<int, int>& key) {
                               return std::pair{e.v0, e.v1} < key;
                             });
  if (it != edges.end() && it->v0 == a && it->v1 == b) return static_cast<int>(it - edges.begin());
  return -1;
}

MeshTopology build_topology(const TriangleMesh& mesh) {
  MeshTopology topo;
  const Index nf = mesh.num_faces();
  std::unordered_map<std::uint64_t, int> lookup;
  lookup.reserve(static_cast<std::size_t>(nf) * 2);
  std::vector<EdgeRecord> edges;
  edges.reserve(static_cast<std::size_t>(nf) * 3 / 2 + 3);
  for (Index f = 0; f < nf; ++f) {
    for (int c = 0; c < 3; ++c) {
      int a = mesh.faces(f, c), b = mesh.faces(f, (c + 1) % 3);
      auto [it, inserted] = lookup.try_emplace(edge_key(a, b), static_cast<int>(edges.size()));
      if (inserted) edges.push_back({std::min(a, b), std::max(a, b), {}});
      edges[it->second].faces.push_back(static_cast<int>(f));
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const EdgeRecord& x, const EdgeRecord& y) { return std::pair{x.v0, x.v1} < std::pair{y.v0, y.v1}; });

  topo.face_adjacency.assign(static_cast<std::size_t>(nf), {});
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& fs = edges[e].faces;
    if (fs.size() == 1) topo.boundary_edges.push_back(static_cast<int>(e));
    if (fs.size() > 2) topo.non_manifold_edges.push_back(static_cast<int>(e));
    for (std::size_t i = 0; i < fs.size(); ++i)
      for (std::size_t j = i + 1; j < fs.size(); ++j) {
        if (fs[i] == fs[j]) continue;
        topo.face_adjacency[fs[i]].push_back(fs[j]);
        topo.face_adjacency[fs[j]].push_back(fs[i]);
      }
  }
  for (auto& adj : topo.face_adjacency) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  topo.edges = std::move(edges);
  return topo;
}

std::vector<int> face_components(const MeshTopology& topology, int* component_count) {
  const std::size_t nf = topology.face_adjacency.size();
  DisjointSets sets(nf);
  for (std::size_t f = 0; f < nf; ++f)
    for (int g : topology.face_adjacency[f]) sets.unite(static_cast<int>(f), g);
  std::vector<int> root_to_id(nf, -1);
  std::vector<int> ids(nf);
  int count = 0;
  for (std::size_t f = 0; f < nf; ++f) {
    const int r = sets.find(static_cast<int>(f));
    if (root_to_id[r] < 0) root_to_id[r] = count++;
    ids[f] = root_to_id[r];
  }
  if (component_count) *component_count = count;
  return ids;
}

TriangleMesh submesh(const TriangleMesh& mesh, const std::vector<int>& faces, std::vector<int>* vertex_map) {
  std::vector<int> remap(static_cast<std::size_t>(mesh.num_vertices()), -1);
  for (int f : faces)
    for (int c = 0; c < 3; ++c) remap[mesh.faces(f, c)] = 0;
  int next = 0;
  std::vector<int> kept;
  for (std::size_t v = 0; v < remap.size(); ++v)
    if (remap[v] == 0) {
      remap[v] = next++;
      kept.push_back(static_cast<int>(v));
    }
  TriangleMesh out;
  out.name = mesh.name;
  out.vertices.resize(next, 3);
  for (int i = 0; i < next; ++i) out.vertices.row(i) = mesh.vertices.row(kept[i]);
  if (mesh.vertex_colors) {
    ColorMatrix colors(next, 3);
    for (int i = 0; i < next; ++i) colors.row(i) = mesh.vertex_colors->row(kept[i]);
    out.vertex_colors = std::move(colors);
  }
  out.faces.resize(static_cast<Index>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i)
    for (int c = 0; c < 3; ++c) out.faces(static_cast<Index>(i), c) = remap[mesh.faces(faces[i], c)];
  if (vertex_map) *vertex_map = std::move(kept);
  return out;
}

std::vector<std::vector<int>> connected_component_faces(const TriangleMesh& mesh, const MeshTopology& topology) {
  int count = 0;
  const auto ids = face_components(topology, &count);
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(count));
  for (Index f = 0; f < mesh.num_faces(); ++f) groups[ids[f]].push_back(static_cast<int>(f));
  return groups;
}

std::vector<TriangleMesh> connected_components(const TriangleMesh& mesh) {
  const auto groups = connected_component_faces(mesh, build_topology(mesh));
  std::vector<TriangleMesh> parts;
  parts.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    parts.push_back(submesh(mesh, groups[i]));
    if (groups.size() > 1) parts.back().name = mesh.name + "#" + std::to_string(i);
  }
  return parts;
}

TriangleMesh compact(const TriangleMesh& mesh) {
  std::vector<int> all(static_cast<std::size_t>(mesh.num_faces()));
  std::iota(all.begin(), all.end(), 0);
  return submesh(mesh, all);
}

TriangleMesh merge(const std::vector<TriangleMesh>& parts, const std::string& name) {
  TriangleMesh out;
  out.name = name;
  Index nv = 0, nf = 0;
  bool colored = !parts.empty();
  for (const auto& p : parts) {
    nv += p.num_vertices();
    nf += p.num_faces();
    colored = colored && p.vertex_colors.has_value();
  }
  out.vertices.resize(nv, 3);
  out.faces.resize(nf, 3);
  ColorMatrix colors(colored ? nv : 0, 3);
  Index vo = 0, fo = 0;
  for (const auto& p : parts) {
    out.vertices.middleRows(vo, p.num_vertices()) = p.vertices;
    if (colored) colors.middleRows(vo, p.num_vertices()) = *p.vertex_colors;
    out.faces.middleRows(fo, p.num_faces()) = p.faces.array() + static_cast<int>(vo);
    vo += p.num_vertices();
    fo += p.num_faces();
  }
  if (colored) out.vertex_colors = std::move(colors);
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return s;
}

}  // namespace fabseg
