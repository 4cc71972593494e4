#include "fabseg/spectral.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "fabseg/kmeans.hpp"
#include "fabseg/spatial.hpp"

namespace fabseg {

DualGraph build_dual_graph(const TriangleMesh& mesh, const MeshTopology& topology, double delta, double eta_convex) {
  if (mesh.num_faces() == 0) throw InvalidArgument("dual graph of an empty mesh");
  if (!(delta >= 0.0 && delta <= 1.0)) throw InvalidArgument("delta must lie in [0, 1]");
  if (!(eta_convex > 0.0 && eta_convex <= 1.0)) throw InvalidArgument("eta_convex must lie in (0, 1]");

  int component_count = 0;
  const auto component = face_components(topology, &component_count);
  std::vector<int> sizes(static_cast<std::size_t>(component_count), 0);
  for (int c : component) ++sizes[c];
  const int largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

  DualGraph graph;
  graph.restricted_to_largest_component = component_count > 1;
  std::vector<int> node_of(static_cast<std::size_t>(mesh.num_faces()), -1);
  for (Index f = 0; f < mesh.num_faces(); ++f)
    if (component[f] == largest) {
      node_of[f] = static_cast<int>(graph.face_ids.size());
      graph.face_ids.push_back(static_cast<int>(f));
    }
  graph.node_count = static_cast<Index>(graph.face_ids.size());

  std::vector<Vec3> centroid(static_cast<std::size_t>(mesh.num_faces()));
  std::vector<Vec3> normal(static_cast<std::size_t>(mesh.num_faces()));
  for (int f : graph.face_ids) {
    centroid[f] = face_centroid(mesh, f);
    normal[f] = face_normal(mesh, f);
  }

  std::map<std::pair<int, int>, std::size_t> seen;
  for (const auto& e : topology.edges) {
    if (e.faces.size() < 2) continue;
    const Vec3 mid = 0.5 * (mesh.vertex(e.v0) + mesh.vertex(e.v1));
    for (std::size_t x = 0; x < e.faces.size(); ++x)
      for (std::size_t y = x + 1; y < e.faces.size(); ++y) {
        const int f = e.faces[x], g = e.faces[y];
        if (f == g || node_of[f] < 0 || node_of[g] < 0) continue;
        int i = node_of[f], j = node_of[g];
        if (i > j) std::swap(i, j);
        if (!seen.emplace(std::pair{i, j}, graph.edges.size()).second) continue;
        DualEdge edge;
        edge.i = i;
        edge.j = j;
        edge.geodesic = (centroid[f] - mid).norm() + (mid - centroid[g]).norm();
        const double cos_theta = std::clamp(normal[f].dot(normal[g]), -1.0, 1.0);
        const bool convex = (centroid[g] - centroid[f]).dot(normal[f]) < 0.0;
        edge.angular = (convex ? eta_convex : 1.0) * (1.0 - cos_theta);
        graph.edges.push_back(edge);
      }
  }

  double geod_sum = 0.0, ang_sum = 0.0;
  for (const auto& e : graph.edges) {
    geod_sum += e.geodesic;
    ang_sum += e.angular;
  }
  const double count = static_cast<double>(std::max<std::size_t>(graph.edges.size(), 1));
  const double geod_avg = geod_sum / count, ang_avg = ang_sum / count;
  if (!graph.edges.empty() && geod_avg <= 0.0 && ang_avg <= 0.0)
    throw InvalidArgument("zero average dual-edge distance");

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(2 * graph.edges.size());
  for (auto& e : graph.edges) {
    double dist = 0.0;
    if (geod_avg > 0.0) dist += delta * e.geodesic / geod_avg;
    if (ang_avg > 0.0) dist += (1.0 - delta) * e.angular / ang_avg;
    e.weight = std::exp(-dist);
    entries.emplace_back(e.i, e.j, e.weight);
    entries.emplace_back(e.j, e.i, e.weight);
  }
  graph.affinity.resize(graph.node_count, graph.node_count);
  graph.affinity.setFromTriplets(entries.begin(), entries.end());
  graph.degree = Eigen::VectorXd::Zero(graph.node_count);
  // fixed summation order: edge list order
  for (const auto& e : graph.edges) {
    graph.degree[e.i] += e.weight;
    graph.degree[e.j] += e.weight;
  }
  return graph;
}

SparseMatrix normalized_laplacian(const DualGraph& graph) {
  for (Index i = 0; i < graph.node_count; ++i)
    if (!(graph.degree[i] > 0.0))
      throw InvalidArgument("face " + std::to_string(graph.face_ids[i]) + " has no neighbors in the dual graph");
  return normalized_laplacian<double>(graph.affinity, graph.degree);
}

std::pair<double, double> mean_and_stddev(const Eigen::VectorXd& values) {
  if (values.size() == 0) return {0.0, 0.0};
  const double mean = values.mean();
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return {mean, std::sqrt(acc / static_cast<double>(values.size()))};
}

Spectrum eigendecompose(const SparseMatrix& L, int window, std::uint64_t seed, const EigenOptions& options) {
  const Index n = L.rows();
  if (window < 1 || window > n) throw InvalidArgument("eigen window must satisfy 1 <= m <= n");
  const bool dense = options.method == EigenMethod::Dense ||
                     (options.method == EigenMethod::Auto && n <= options.dense_limit);
  EigenPairs<double> pairs;
  if (dense) {
    pairs = dense_smallest_eigenpairs<double>(L, window);
  } else {
    LanczosOptions lanczos = options.lanczos;
    lanczos.seed = seed;
    pairs = lanczos_smallest_eigenpairs<double>(L, window, lanczos);
  }
  Spectrum s;
  s.eigenvalues = std::move(pairs.values);
  s.eigenvectors = std::move(pairs.vectors);
  s.window = window;
  std::tie(s.mean, s.stddev) = mean_and_stddev(s.eigenvalues);
  s.dense = dense;
  s.max_residual = pairs.max_residual;
  return s;
}

int predict_k(const Eigen::VectorXd& eigenvalues, int k_min, int k_max) {
  if (k_min < 1 || k_min > k_max) throw InvalidArgument("predict_k needs 1 <= k_min <= k_max");
  const auto [mean, stddev] = mean_and_stddev(eigenvalues);
  const double threshold = mean + stddev;
  int raw = 0;
  for (double v : eigenvalues)
    if (v > threshold) ++raw;
  return std::clamp(raw, k_min, k_max);
}

int predict_k(const Spectrum& spectrum, int k_min, int k_max) {
  if (spectrum.eigenvalues.size() == 0) throw InvalidArgument("empty spectrum");
  return predict_k(spectrum.eigenvalues, k_min, k_max);
}

int SegmentParams::effective_k_max() const {
  if (k_max > 0) return k_max;
  return std::max(1, std::min(window - 1, 25));
}

void rebuild_segments(SegmentationResult& result) {
  std::vector<int> rename;
  for (int& label : result.face_labels) {
    if (label < 0) throw InvalidArgument("negative segment label");
    if (static_cast<std::size_t>(label) >= rename.size()) rename.resize(static_cast<std::size_t>(label) + 1, -1);
    if (rename[label] < 0) rename[label] = 0;
  }
  // keep ids as given when they are already 0..k-1, otherwise compact in id order
  int next = 0;
  for (auto& r : rename)
    if (r == 0) r = next++;
  for (int& label : result.face_labels) label = rename[label];
  result.k = next;
  result.segments.assign(static_cast<std::size_t>(next), {});
  for (std::size_t f = 0; f < result.face_labels.size(); ++f)
    result.segments[result.face_labels[f]].push_back(static_cast<int>(f));
}

SegmentationResult segment(const TriangleMesh& mesh, std::optional<int> requested_k, const SegmentParams& params) {
  validate(mesh);
  if (mesh.num_faces() == 0) throw InvalidArgument("cannot segment an empty mesh");
  if (params.window < 1) throw InvalidArgument("eigen window must be positive");
  if (requested_k && (*requested_k < 1 || *requested_k > mesh.num_faces()))
    throw InvalidArgument("requested k must lie in [1, face count]");
  const int k_max = params.effective_k_max();
  if (params.k_min < 1 || params.k_min > k_max) throw InvalidArgument("k_min must lie in [1, k_max]");

  SegmentationResult result;
  result.requested_k = requested_k;
  result.seed = params.seed;
  result.params = params;

  const MeshTopology topology = build_topology(mesh);
  if (!topology.is_manifold())
    result.warnings.push_back(std::to_string(topology.non_manifold_edges.size()) + " non-manifold edges");
  const DualGraph graph = build_dual_graph(mesh, topology, params.delta, params.eta_convex);
  const Index n = graph.node_count;
  if (graph.restricted_to_largest_component)
    result.warnings.push_back("mesh is disconnected; segmented the largest component and attached the rest by proximity");

  std::vector<int> node_labels(static_cast<std::size_t>(n), 0);
  if (n == 1) {
    result.predicted_k = params.k_min;
    result.eigenvalues = {0.0};
  } else {
    const int window = static_cast<int>(std::min<Index>(params.window, n));
    const int needed = static_cast<int>(std::min<Index>(n, std::max(window, requested_k.value_or(0))));
    const SparseMatrix L = normalized_laplacian(graph);
    const Spectrum spectrum = eigendecompose(L, needed, params.seed, params.eigen);
    const Eigen::VectorXd head = spectrum.eigenvalues.head(window);
    result.eigenvalues.assign(head.data(), head.data() + head.size());
    result.predicted_k = predict_k(head, params.k_min, k_max);
    const int k = static_cast<int>(std::min<Index>(requested_k.value_or(result.predicted_k), n));
    if (k > 1) {
      Eigen::MatrixXd embedding = spectrum.eigenvectors.leftCols(k);
      for (Index i = 0; i < n; ++i) {
        const double len = embedding.row(i).norm();
        if (len > 0.0) embedding.row(i) /= len;
      }
      node_labels = kmeans(embedding, k, mix_seed(params.seed, 0x6b6d)).labels;
    }
  }

  result.face_labels.assign(static_cast<std::size_t>(mesh.num_faces()), -1);
  for (Index i = 0; i < n; ++i) result.face_labels[graph.face_ids[i]] = node_labels[i];
  if (graph.restricted_to_largest_component) {
    const TriangleMesh core = submesh(mesh, graph.face_ids);
    const TriangleTree tree(core);
    for (Index f = 0; f < mesh.num_faces(); ++f)
      if (result.face_labels[f] < 0)
        result.face_labels[f] = node_labels[tree.closest(face_centroid(mesh, f)).face];
  }
  // canonical ids: order of first appearance in face order
  std::vector<int> rename;
  int next = 0;
  for (int& label : result.face_labels) {
    if (static_cast<std::size_t>(label) >= rename.size()) rename.resize(static_cast<std::size_t>(label) + 1, -1);
    if (rename[label] < 0) rename[label] = next++;
    label = rename[label];
  }
  rebuild_segments(result);
  return result;
}

std::vector<SweepPoint> stability_sweep(const TriangleMesh& mesh, const std::vector<long>& resolutions,
                                        const SegmentParams& params, const RemeshParams& remesh_params) {
  if (!std::is_sorted(resolutions.begin(), resolutions.end()))
    throw InvalidArgument("sweep resolutions must be ascending");
  using Clock = std::chrono::steady_clock;
  std::vector<SweepPoint> out;
  for (long r : resolutions) {
    SweepPoint point;
    point.resolution = r;
    RemeshParams rp = remesh_params;
    rp.target_resolution = r;
    const auto t0 = Clock::now();
    const TriangleMesh remeshed = remesh(mesh, rp);
    const auto t1 = Clock::now();
    const SegmentationResult seg = segment(remeshed, std::nullopt, params);
    const auto t2 = Clock::now();
    point.faces = remeshed.num_faces();
    point.predicted_k = seg.predicted_k;
    point.remesh_seconds = std::chrono::duration<double>(t1 - t0).count();
    point.wall_seconds = std::chrono::duration<double>(t2 - t1).count();
    out.push_back(point);
  }
  return out;
}

std::optional<long> stabilization_resolution(const std::vector<SweepPoint>& sweep, int min_agreeing) {
  if (sweep.empty()) return std::nullopt;
  std::size_t start = sweep.size() - 1;
  while (start > 0 && sweep[start - 1].predicted_k == sweep.back().predicted_k) --start;
  if (static_cast<int>(sweep.size() - start) < min_agreeing) return std::nullopt;
  return sweep[start].resolution;
}

}  // namespace fabseg
