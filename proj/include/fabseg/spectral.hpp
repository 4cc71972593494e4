#pragma once

#include <Eigen/SparseCore>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fabseg/eigensolver.hpp"
#include "fabseg/mesh.hpp"
#include "fabseg/remesh.hpp"

namespace fabseg {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct DualEdge {
  int i = 0;  // graph nodes, i < j
  int j = 0;
  double geodesic = 0.0;  // mm
  double angular = 0.0;
  double weight = 0.0;    // affinity in (0, 1]
};

/// Weighted face-dual graph. Nodes are faces of the largest edge-connected
/// component; face_ids maps node -> mesh face.
struct DualGraph {
  Index node_count = 0;
  std::vector<DualEdge> edges;
  SparseMatrix affinity;
  Eigen::VectorXd degree;
  std::vector<int> face_ids;
  bool restricted_to_largest_component = false;
};

DualGraph build_dual_graph(const TriangleMesh& mesh, const MeshTopology& topology, double delta = 0.5,
                           double eta_convex = 0.1);

/// I - D^-1/2 W D^-1/2 for a symmetric affinity W with degree vector D.
template <typename Scalar>
Eigen::SparseMatrix<Scalar> normalized_laplacian(const Eigen::SparseMatrix<Scalar>& affinity,
                                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& degree) {
  const Eigen::Index n = affinity.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(degree[i] > 0)) throw InvalidArgument("isolated node " + std::to_string(i) + " has zero degree");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_sqrt = degree.cwiseSqrt().cwiseInverse();
  std::vector<Eigen::Triplet<Scalar>> entries;
  entries.reserve(static_cast<std::size_t>(affinity.nonZeros() + n));
  for (Eigen::Index i = 0; i < n; ++i) entries.emplace_back(i, i, Scalar(1));
  for (Eigen::Index col = 0; col < affinity.outerSize(); ++col)
    for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(affinity, col); it; ++it)
      if (it.row() != it.col()) entries.emplace_back(it.row(), it.col(), -it.value() * inv_sqrt[it.row()] * inv_sqrt[it.col()]);
  Eigen::SparseMatrix<Scalar> L(n, n);
  L.setFromTriplets(entries.begin(), entries.end());
  return L;
}

/// Graph overload; isolated nodes are reported by their mesh face id.
SparseMatrix normalized_laplacian(const DualGraph& graph);

struct Spectrum {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // n x window, unit columns
  int window = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population form
  bool dense = false;
  double max_residual = 0.0;
};

enum class EigenMethod { Auto, Dense, Iterative };

struct EigenOptions {
  EigenMethod method = EigenMethod::Auto;
  Index dense_limit = 512;
  LanczosOptions lanczos;
};

/// Smallest `window` eigenpairs of L; dense below dense_limit, Lanczos above.
Spectrum eigendecompose(const SparseMatrix& L, int window, std::uint64_t seed, const EigenOptions& options = {});

/// Population mean and standard deviation of a list.
std::pair<double, double> mean_and_stddev(const Eigen::VectorXd& values);

/// Number of eigenvalues strictly above mean + stddev, clamped to [k_min, k_max].
int predict_k(const Eigen::VectorXd& eigenvalues, int k_min, int k_max);
int predict_k(const Spectrum& spectrum, int k_min, int k_max);

struct SegmentParams {
  double delta = 0.5;
  double eta_convex = 0.1;
  int window = 64;  // m, eigenvalues considered by predict_k
  std::uint64_t seed = 0;
  int k_min = 1;
  int k_max = 0;  // 0 means min(window - 1, 25)
  EigenOptions eigen;

  int effective_k_max() const;
};

struct SegmentationResult {
  int k = 0;
  std::vector<int> face_labels;
  std::vector<std::vector<int>> segments;
  int predicted_k = 0;
  std::optional<int> requested_k;
  std::uint64_t seed = 0;
  SegmentParams params;
  std::vector<double> eigenvalues;  // window used for the prediction
  std::vector<std::string> warnings;
};

/// Rebuilds `segments` and `k` from face_labels (labels must be 0..k-1).
void rebuild_segments(SegmentationResult& result);

/// Spectral segmentation: k-means on row-normalized eigenvector embeddings
/// of the normalized dual-graph Laplacian.
SegmentationResult segment(const TriangleMesh& mesh, std::optional<int> requested_k, const SegmentParams& params = {});

struct SweepPoint {
  long resolution = 0;
  long faces = 0;
  int predicted_k = 0;
  double remesh_seconds = 0.0;
  double wall_seconds = 0.0;  // segmentation only
};

std::vector<SweepPoint> stability_sweep(const TriangleMesh& mesh, const std::vector<long>& resolutions,
                                        const SegmentParams& params, const RemeshParams& remesh_params = {});

/// Lowest resolution from which predicted_k never changes again, provided at
/// least `min_agreeing` resolutions share that value.
std::optional<long> stabilization_resolution(const std::vector<SweepPoint>& sweep, int min_agreeing = 1);

}  // namespace fabseg
