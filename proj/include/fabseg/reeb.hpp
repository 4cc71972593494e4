#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fabseg/mesh.hpp"
#include "fabseg/spectral.hpp"

namespace fabseg {

/// Normalized geodesic-integral function over the vertices of a mesh.
struct MuField {
  Eigen::VectorXd values;  // in [0, 1]; all zero for a constant field
  Eigen::VectorXd raw;     // before normalization
  std::vector<int> base_points;
  double total_area = 0.0;
};

/// mu(v) = sum over base points b of geodesic(v, b) * area(b), with base
/// points from farthest-point sampling on the edge graph and area(b) the
/// Voronoi share of b. Requires a connected mesh.
MuField compute_mu(const TriangleMesh& mesh, int num_base_points = 400, std::uint64_t seed = 0);

struct MrgNode {
  int interval = 0;     // index among the 2^r intervals of its level
  double area = 0.0;    // a(n): fraction of total surface area
  double length = 0.0;  // l(n): fraction of the level's summed mu-extent
  int parent = -1;      // node index one level up
  int face_count = 0;
};

struct MrgLevel {
  std::vector<MrgNode> nodes;
  std::vector<std::pair<int, int>> edges;  // adjacent intervals, first < second
};

/// Multiresolution Reeb graph: level r splits [0, 1] into 2^r intervals.
struct MRG {
  int resolution = 0;  // R; levels.size() == R + 1
  std::vector<MrgLevel> levels;

  const MrgLevel& finest() const { return levels.back(); }
};

MRG build_mrg(const TriangleMesh& mesh, const MuField& mu, int resolution = 4);

struct MatchedPair {
  int level = 0;
  int first = 0;   // node in the first graph
  int second = 0;  // node in the second graph
  double similarity = 0.0;
};

struct SimilarityScore {
  double value = 0.0;
  std::vector<MatchedPair> matched_pairs;
};

/// Coarse-to-fine greedy matching; children may only pair when their parents
/// paired. Score is the summed pair similarity at the finest level.
SimilarityScore mrg_similarity(const MRG& first, const MRG& second, double weight = 0.5);

/// Similarity of two segments weighted by the similarity of their parent meshes.
inline double contextual_similarity(double mesh_similarity, double segment_similarity) {
  return mesh_similarity * segment_similarity;
}

struct ShapeParams {
  int base_points = 400;
  int resolution = 4;
  double weight = 0.5;
  std::uint64_t seed = 0;
};

/// mu field plus MRG for any mesh; disconnected meshes get one mu solve per
/// component, normalized jointly.
MRG shape_signature(const TriangleMesh& mesh, const ShapeParams& params = {});

struct SegmentMesh {
  TriangleMesh mesh;
  std::vector<int> faces;  // source face ids
  bool disconnected = false;
};

/// The faces of one segment as a standalone mesh; the largest piece when the
/// segment is not edge-connected.
SegmentMesh segment_submesh(const TriangleMesh& mesh, const SegmentationResult& segmentation, int segment_id);

/// "MRG1" binary sidecar: little-endian, versioned, FNV-1a checksum trailer.
std::string serialize_mrg(const MRG& graph);
MRG deserialize_mrg(std::string_view bytes);

}  // namespace fabseg
