#include "fabseg/reeb.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <tuple>

#include "fabseg/error.hpp"
#include "fabseg/rng.hpp"

namespace fabseg {

namespace {

struct EdgeGraph {
  std::vector<int> offsets;
  std::vector<int> targets;
  std::vector<double> lengths;
};

EdgeGraph vertex_edge_graph(const TriangleMesh& mesh, const MeshTopology& topo) {
  const auto nv = static_cast<std::size_t>(mesh.num_vertices());
  std::vector<int> degree(nv, 0);
  for (const auto& e : topo.edges) {
    ++degree[e.v0];
    ++degree[e.v1];
  }
  EdgeGraph g;
  g.offsets.assign(nv + 1, 0);
  for (std::size_t v = 0; v < nv; ++v) g.offsets[v + 1] = g.offsets[v] + degree[v];
  g.targets.resize(static_cast<std::size_t>(g.offsets.back()));
  g.lengths.resize(g.targets.size());
  std::vector<int> fill(g.offsets.begin(), g.offsets.end() - 1);
  for (const auto& e : topo.edges) {
    const double len = (mesh.vertex(e.v0) - mesh.vertex(e.v1)).norm();
    g.targets[fill[e.v0]] = e.v1;
    g.lengths[fill[e.v0]++] = len;
    g.targets[fill[e.v1]] = e.v0;
    g.lengths[fill[e.v1]++] = len;
  }
  return g;
}

void dijkstra(const EdgeGraph& g, int source, std::vector<double>& dist) {
  dist.assign(g.offsets.size() - 1, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist[source] = 0.0;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > dist[v]) continue;
    for (int k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
      const double nd = d + g.lengths[k];
      if (nd < dist[g.targets[k]]) {
        dist[g.targets[k]] = nd;
        heap.emplace(nd, g.targets[k]);
      }
    }
  }
}

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

void normalize_field(MuField& mu, const std::vector<char>& referenced) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Index v = 0; v < mu.raw.size(); ++v)
    if (referenced[v]) {
      lo = std::min(lo, mu.raw[v]);
      hi = std::max(hi, mu.raw[v]);
    }
  mu.values = Eigen::VectorXd::Zero(mu.raw.size());
  // (mu - min) / max: a near-constant field stays near zero instead of
  // stretching sampling noise across the whole range
  if (!std::isfinite(hi) || hi <= 0.0 || hi - lo <= 1e-9 * hi) return;
  for (Index v = 0; v < mu.raw.size(); ++v)
    if (referenced[v]) mu.values[v] = std::clamp((mu.raw[v] - lo) / hi, 0.0, 1.0);
}

/// Raw mu over one connected vertex set; writes into mu.raw and base_points.
void accumulate_mu(const TriangleMesh& mesh, const EdgeGraph& graph, const std::vector<int>& vertices,
                   const Eigen::VectorXd& vertex_area, int num_base_points, std::uint64_t seed, MuField& mu) {
  if (vertices.size() <= 3) {
    // a lone triangle carries no shape; its field is constant
    for (int v : vertices) mu.raw[v] = 0.0;
    return;
  }
  const int count = std::min<int>(num_base_points, static_cast<int>(vertices.size()));
  Rng rng(seed);
  std::vector<std::vector<double>> dists;
  dists.reserve(static_cast<std::size_t>(count));
  std::vector<double> nearest(static_cast<std::size_t>(mesh.num_vertices()), std::numeric_limits<double>::infinity());
  std::vector<int> owner(static_cast<std::size_t>(mesh.num_vertices()), -1);
  int next = vertices[uniform_index(rng, vertices.size())];
  std::vector<int> bases;
  for (int b = 0; b < count; ++b) {
    bases.push_back(next);
    dists.emplace_back();
    dijkstra(graph, next, dists.back());
    const auto& d = dists.back();
    double far = -1.0;
    int far_v = -1;
    for (int v : vertices) {
      if (d[v] < nearest[v] * (1.0 - 1e-9) - 1e-12) owner[v] = b;
      nearest[v] = std::min(nearest[v], d[v]);
      // relative slack keeps the pick stable under rigid motions of symmetric shapes
      if (nearest[v] > far * (1.0 + 1e-9) + 1e-12) {
        far = nearest[v];
        far_v = v;
      }
    }
    next = far_v;
  }
  std::vector<double> share(static_cast<std::size_t>(count), 0.0);
  for (int v : vertices) share[owner[v]] += vertex_area[v];
  for (int v : vertices) {
    double acc = 0.0;
    for (int b = 0; b < count; ++b) acc += dists[b][v] * share[b];
    mu.raw[v] = acc;
  }
  mu.base_points.insert(mu.base_points.end(), bases.begin(), bases.end());
}

Eigen::VectorXd vertex_areas(const TriangleMesh& mesh) {
  Eigen::VectorXd area = Eigen::VectorXd::Zero(mesh.num_vertices());
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const double a = face_area(mesh, f) / 3.0;
    for (int c = 0; c < 3; ++c) area[mesh.faces(f, c)] += a;
  }
  return area;
}

std::vector<std::vector<int>> vertex_components(const TriangleMesh& mesh, const MeshTopology& topo,
                                                std::vector<char>& referenced) {
  const auto nv = static_cast<std::size_t>(mesh.num_vertices());
  referenced.assign(nv, 0);
  for (Index f = 0; f < mesh.num_faces(); ++f)
    for (int c = 0; c < 3; ++c) referenced[mesh.faces(f, c)] = 1;
  DisjointSets sets(nv);
  for (const auto& e : topo.edges) sets.unite(e.v0, e.v1);
  std::map<int, std::vector<int>> groups;
  for (std::size_t v = 0; v < nv; ++v)
    if (referenced[v]) groups[sets.find(static_cast<int>(v))].push_back(static_cast<int>(v));
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

}  // namespace

MuField compute_mu(const TriangleMesh& mesh, int num_base_points, std::uint64_t seed) {
  if (num_base_points < 1) throw InvalidArgument("need at least one base point");
  if (mesh.num_faces() == 0) throw InvalidArgument("mu of an empty mesh");
  const MeshTopology topo = build_topology(mesh);
  std::vector<char> referenced;
  const auto components = vertex_components(mesh, topo, referenced);
  if (components.size() != 1) throw InvalidArgument("mu requires a connected mesh; split it into components first");
  MuField mu;
  mu.raw = Eigen::VectorXd::Zero(mesh.num_vertices());
  const Eigen::VectorXd area = vertex_areas(mesh);
  mu.total_area = area.sum();
  accumulate_mu(mesh, vertex_edge_graph(mesh, topo), components[0], area, num_base_points, seed, mu);
  normalize_field(mu, referenced);
  return mu;
}

MRG build_mrg(const TriangleMesh& mesh, const MuField& mu, int resolution) {
  if (resolution < 1 || resolution > 16) throw InvalidArgument("MRG resolution must lie in [1, 16]");
  if (mu.values.size() != mesh.num_vertices()) throw InvalidArgument("mu field does not match the mesh");
  const Index nf = mesh.num_faces();
  const MeshTopology topo = build_topology(mesh);
  const Eigen::VectorXd areas = face_areas(mesh);
  const double total_area = std::max(areas.sum(), std::numeric_limits<double>::min());
  const int finest_bins = 1 << resolution;

  std::vector<int> finest_bin(static_cast<std::size_t>(nf));
  for (Index f = 0; f < nf; ++f) {
    const double m = (mu.values[mesh.faces(f, 0)] + mu.values[mesh.faces(f, 1)] + mu.values[mesh.faces(f, 2)]) / 3.0;
    finest_bin[f] = std::clamp(static_cast<int>(std::floor(m * finest_bins)), 0, finest_bins - 1);
  }

  MRG graph;
  graph.resolution = resolution;
  graph.levels.resize(static_cast<std::size_t>(resolution + 1));
  std::vector<std::vector<int>> node_of_face(static_cast<std::size_t>(resolution + 1));

  for (int r = 0; r <= resolution; ++r) {
    const int shift = resolution - r;
    const double width = 1.0 / static_cast<double>(1 << r);
    DisjointSets sets(static_cast<std::size_t>(nf));
    for (Index f = 0; f < nf; ++f)
      for (int g : topo.face_adjacency[f])
        if ((finest_bin[f] >> shift) == (finest_bin[g] >> shift)) sets.unite(static_cast<int>(f), g);

    // canonical node order: (interval, lowest face)
    std::vector<std::pair<int, int>> roots;
    for (Index f = 0; f < nf; ++f)
      if (sets.find(static_cast<int>(f)) == f) roots.emplace_back(finest_bin[f] >> shift, static_cast<int>(f));
    std::sort(roots.begin(), roots.end());
    std::vector<int> node_of_root(static_cast<std::size_t>(nf), -1);
    auto& level = graph.levels[r];
    level.nodes.resize(roots.size());
    for (std::size_t i = 0; i < roots.size(); ++i) {
      node_of_root[roots[i].second] = static_cast<int>(i);
      level.nodes[i].interval = roots[i].first;
    }
    auto& face_node = node_of_face[r];
    face_node.resize(static_cast<std::size_t>(nf));
    std::vector<double> lo(roots.size(), std::numeric_limits<double>::infinity());
    std::vector<double> hi(roots.size(), -std::numeric_limits<double>::infinity());
    for (Index f = 0; f < nf; ++f) {
      const int node = node_of_root[sets.find(static_cast<int>(f))];
      face_node[f] = node;
      auto& n = level.nodes[node];
      n.area += areas[f];
      ++n.face_count;
      const double a = n.interval * width, b = (n.interval + 1) * width;
      for (int c = 0; c < 3; ++c) {
        const double m = std::clamp(mu.values[mesh.faces(f, c)], a, b);
        lo[node] = std::min(lo[node], m);
        hi[node] = std::max(hi[node], m);
      }
    }
    double extent_sum = 0.0;
    std::vector<double> extent(roots.size());
    for (std::size_t i = 0; i < roots.size(); ++i) {
      extent[i] = std::max(0.0, hi[i] - lo[i]);
      extent_sum += extent[i];
    }
    for (std::size_t i = 0; i < roots.size(); ++i) {
      auto& n = level.nodes[i];
      n.area /= total_area;
      n.length = extent_sum > 0.0 ? extent[i] / extent_sum : 1.0 / static_cast<double>(roots.size());
    }
    for (Index f = 0; f < nf; ++f)
      for (int g : topo.face_adjacency[f]) {
        if (g <= f) continue;
        const int bf = finest_bin[f] >> shift, bg = finest_bin[g] >> shift;
        if (std::abs(bf - bg) != 1) continue;
        const int x = face_node[f], y = face_node[g];
        level.edges.emplace_back(std::min(x, y), std::max(x, y));
      }
    std::sort(level.edges.begin(), level.edges.end());
    level.edges.erase(std::unique(level.edges.begin(), level.edges.end()), level.edges.end());
    if (r > 0) {
      std::vector<int> first_face(roots.size());
      for (std::size_t i = 0; i < roots.size(); ++i) first_face[i] = roots[i].second;
      for (std::size_t i = 0; i < roots.size(); ++i) level.nodes[i].parent = node_of_face[r - 1][first_face[i]];
    }
  }
  return graph;
}

SimilarityScore mrg_similarity(const MRG& first, const MRG& second, double weight) {
  if (first.resolution != second.resolution)
    throw InvalidArgument("MRG resolutions differ (" + std::to_string(first.resolution) + " vs " +
                          std::to_string(second.resolution) + ")");
  if (!(weight >= 0.0 && weight <= 1.0)) throw InvalidArgument("attribute weight must lie in [0, 1]");

  auto pair_sim = [&](const MrgNode& m, const MrgNode& n) {
    return weight * std::min(m.area, n.area) + (1.0 - weight) * std::min(m.length, n.length);
  };
  using NodeKey = std::tuple<double, double, int, int>;
  auto key = [](const MrgNode& node, int index) { return NodeKey{node.area, node.length, node.interval, index}; };

  struct Candidate {
    int i, j;
    double sim;
    double gap;
    NodeKey lo, hi;
  };

  SimilarityScore score;
  std::vector<std::pair<int, int>> matched;  // at the previous level
  for (int r = 0; r <= first.resolution; ++r) {
    const auto& n1 = first.levels[r].nodes;
    const auto& n2 = second.levels[r].nodes;
    std::vector<Candidate> candidates;
    auto add = [&](int i, int j) {
      const NodeKey a = key(n1[i], i), b = key(n2[j], j);
      candidates.push_back({i, j, pair_sim(n1[i], n2[j]),
                            std::abs(n1[i].area - n2[j].area) + std::abs(n1[i].length - n2[j].length),
                            std::min(a, b), std::max(a, b)});
    };
    if (r == 0) {
      for (int i = 0; i < static_cast<int>(n1.size()); ++i)
        for (int j = 0; j < static_cast<int>(n2.size()); ++j) add(i, j);
    } else {
      std::vector<std::vector<int>> kids1(first.levels[r - 1].nodes.size());
      std::vector<std::vector<int>> kids2(second.levels[r - 1].nodes.size());
      for (int i = 0; i < static_cast<int>(n1.size()); ++i) kids1[n1[i].parent].push_back(i);
      for (int j = 0; j < static_cast<int>(n2.size()); ++j) kids2[n2[j].parent].push_back(j);
      for (const auto& [p, q] : matched)
        for (int i : kids1[p])
          for (int j : kids2[q]) add(i, j);
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      if (x.sim != y.sim) return x.sim > y.sim;
      if (x.gap != y.gap) return x.gap < y.gap;
      if (x.lo != y.lo) return x.lo < y.lo;
      return x.hi < y.hi;
    });
    std::vector<char> used1(n1.size(), 0), used2(n2.size(), 0);
    matched.clear();
    double total = 0.0;
    for (const auto& c : candidates) {
      if (used1[c.i] || used2[c.j] || c.sim <= 0.0) continue;
      used1[c.i] = used2[c.j] = 1;
      matched.emplace_back(c.i, c.j);
      score.matched_pairs.push_back({r, c.i, c.j, c.sim});
      total += c.sim;
    }
    if (r == first.resolution) score.value = std::clamp(total, 0.0, 1.0);
  }
  return score;
}

MRG shape_signature(const TriangleMesh& mesh, const ShapeParams& params) {
  if (mesh.num_faces() == 0) throw InvalidArgument("signature of an empty mesh");
  const MeshTopology topo = build_topology(mesh);
  std::vector<char> referenced;
  const auto components = vertex_components(mesh, topo, referenced);
  MuField mu;
  mu.raw = Eigen::VectorXd::Zero(mesh.num_vertices());
  const Eigen::VectorXd area = vertex_areas(mesh);
  mu.total_area = area.sum();
  const EdgeGraph graph = vertex_edge_graph(mesh, topo);
  for (std::size_t c = 0; c < components.size(); ++c)
    accumulate_mu(mesh, graph, components[c], area, params.base_points, mix_seed(params.seed, c), mu);
  normalize_field(mu, referenced);
  return build_mrg(mesh, mu, params.resolution);
}

SegmentMesh segment_submesh(const TriangleMesh& mesh, const SegmentationResult& segmentation, int segment_id) {
  if (segment_id < 0 || segment_id >= segmentation.k) throw InvalidArgument("segment id out of range");
  if (static_cast<Index>(segmentation.face_labels.size()) != mesh.num_faces())
    throw InvalidArgument("segmentation does not match the mesh face count");
  std::vector<int> faces;
  for (std::size_t f = 0; f < segmentation.face_labels.size(); ++f)
    if (segmentation.face_labels[f] == segment_id) faces.push_back(static_cast<int>(f));
  if (faces.empty()) throw InvalidArgument("segment " + std::to_string(segment_id) + " is empty");

  SegmentMesh out;
  TriangleMesh piece = submesh(mesh, faces);
  const MeshTopology topo = build_topology(piece);
  const auto groups = connected_component_faces(piece, topo);
  if (groups.size() > 1) {
    std::size_t best = 0;
    for (std::size_t g = 1; g < groups.size(); ++g)
      if (groups[g].size() > groups[best].size()) best = g;
    out.disconnected = true;
    out.mesh = submesh(piece, groups[best]);
    for (int f : groups[best]) out.faces.push_back(faces[f]);
  } else {
    out.mesh = std::move(piece);
    out.faces = std::move(faces);
  }
  out.mesh.name = mesh.name + "/segment" + std::to_string(segment_id);
  return out;
}

// ---------------------------------------------------------------------------
// MRG1 sidecar

namespace {

constexpr char kMagic[4] = {'M', 'R', 'G', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  std::string out;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint64_t take(int bytes) {
    if (pos_ + static_cast<std::size_t>(bytes) > data_.size()) throw Error("truncated MRG sidecar");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() {
    const std::uint64_t bits = take(8);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::size_t position() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_mrg(const MRG& graph) {
  Writer w;
  w.out.append(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(graph.resolution));
  for (const auto& level : graph.levels) {
    w.u32(static_cast<std::uint32_t>(level.nodes.size()));
    for (const auto& n : level.nodes) {
      w.i32(n.interval);
      w.f64(n.area);
      w.f64(n.length);
      w.i32(n.parent);
      w.i32(n.face_count);
    }
    w.u32(static_cast<std::uint32_t>(level.edges.size()));
    for (const auto& [a, b] : level.edges) {
      w.i32(a);
      w.i32(b);
    }
  }
  w.u64(fnv1a(w.out));
  return w.out;
}

MRG deserialize_mrg(std::string_view bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error("not an MRG1 sidecar");
  const std::string_view payload = bytes.substr(0, bytes.size() - 8);
  Reader trailer(bytes.substr(bytes.size() - 8));
  if (trailer.take(8) != fnv1a(payload)) throw Error("MRG sidecar checksum mismatch");
  Reader r(payload);
  r.take(4);
  if (r.u32() != kVersion) throw Error("unsupported MRG sidecar version");
  MRG graph;
  graph.resolution = static_cast<int>(r.u32());
  if (graph.resolution < 1 || graph.resolution > 16) throw Error("corrupt MRG resolution");
  graph.levels.resize(static_cast<std::size_t>(graph.resolution + 1));
  for (int lvl = 0; lvl <= graph.resolution; ++lvl) {
    auto& level = graph.levels[lvl];
    const std::uint32_t count = r.u32();
    if (count > payload.size()) throw Error("corrupt MRG node count");
    level.nodes.resize(count);
    for (auto& n : level.nodes) {
      n.interval = r.i32();
      n.area = r.f64();
      n.length = r.f64();
      n.parent = r.i32();
      n.face_count = r.i32();
      if (lvl > 0 && (n.parent < 0 || n.parent >= static_cast<int>(graph.levels[lvl - 1].nodes.size())))
        throw Error("corrupt MRG parent link");
    }
    const std::uint32_t edges = r.u32();
    if (edges > payload.size()) throw Error("corrupt MRG edge count");
    level.edges.resize(edges);
    for (auto& [a, b] : level.edges) {
      a = r.i32();
      b = r.i32();
    }
  }
  if (r.position() != payload.size()) throw Error("trailing bytes in MRG sidecar");
  return graph;
}

}  // namespace fabseg
