#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fabseg/labels.hpp"
#include "fabseg/reeb.hpp"
#include "fabseg/spectral.hpp"

namespace fabseg {

struct CorpusEntry {
  std::string thing_id;  // unique per entry
  std::string mesh_path;
  Category category = Category::Artifact;
  Composition composition = Composition::Single;
  std::string component_of;  // groups the components of one design; empty means standalone
  TriangleMesh mesh;
  SegmentationResult segmentation;
  std::vector<FunctionalityLabel> labels;

  const std::string& group() const { return component_of.empty() ? thing_id : component_of; }
};

struct IngestRejection {
  std::size_t index = 0;  // position in the manifest
  std::string thing_id;
  std::string reason;  // machine-readable code
  std::string detail;
};

struct IngestOptions {
  // When an entry has no segmentation, the mesh is remeshed to this many
  // faces (0 keeps it as is) and segmented with k = number of labels.
  long corpus_resolution = 0;
  SegmentParams segment;
  RemeshParams remesh;
};

struct IngestResult {
  std::vector<CorpusEntry> entries;
  std::vector<IngestRejection> rejected;
  std::vector<std::string> warnings;
};

/// Manifest: JSON array of {"thing_id", "mesh", "category", "composition",
/// "segmentation"?, "labels", "component_of"?}; mesh paths resolve against
/// the manifest directory. Each entry is accepted or rejected as a whole.
IngestResult ingest(const std::string& manifest_path, const IngestOptions& options = {});
IngestResult ingest_manifest(const std::string& manifest_text, const std::string& base_dir,
                             const IngestOptions& options = {});

struct IndexedSegment {
  int segment_id = 0;
  FunctionalityLabel label = FunctionalityLabel::Aesthetic;
  int face_count = 0;
  bool disconnected = false;
  MRG mrg;
};

struct IndexedMesh {
  std::string thing_id;
  std::string group;
  std::string mesh_path;
  Category category = Category::Artifact;
  Composition composition = Composition::Single;
  SegmentationResult segmentation;
  std::string hash;
  MRG mrg;
  std::vector<IndexedSegment> segments;
};

struct CorpusIndex {
  int version = 1;
  ShapeParams shape;
  std::string manifest_hash;
  std::vector<IndexedMesh> meshes;

  std::size_t segment_count() const;
  const IndexedMesh* find(const std::string& thing_id) const;
};

struct BuildStats {
  int mesh_mrgs_computed = 0;
  int segment_mrgs_computed = 0;
  int cache_hits = 0;
  int sidecars_repaired = 0;
};

/// Computes mesh and segment MRGs. With a directory, writes manifest.json,
/// hashes.json and mrg/<id>.mrg1 sidecars, reusing sidecars whose entry hash
/// is unchanged and recomputing any that fail to load.
CorpusIndex build_index(const std::vector<CorpusEntry>& entries, const ShapeParams& shape = {},
                        const std::string& directory = {}, BuildStats* stats = nullptr);

/// Reads an index directory written by build_index.
CorpusIndex load_index(const std::string& directory);

struct MeshMatch {
  std::size_t mesh = 0;  // position in index.meshes
  std::string thing_id;
  double similarity = 0.0;
};

using MeshFilter = std::function<bool(const IndexedMesh&)>;

/// Descending similarity, ties by thing_id; at most top_n results.
std::vector<MeshMatch> query_similar_meshes(const MRG& query, const CorpusIndex& index, int top_n = 5,
                                            const MeshFilter& allowed = {});
std::vector<MeshMatch> query_similar_meshes(const TriangleMesh& mesh, const CorpusIndex& index, int top_n = 5);

struct Metric {
  long true_positive = 0;
  long false_positive = 0;
  long false_negative = 0;
  long true_negative = 0;
  std::optional<double> precision;  // empty when undefined
  std::optional<double> recall;

  void finish();
};

struct EvaluationReport {
  int folds = 0;
  std::uint64_t seed = 0;
  Metric external;
  Metric internal;
  std::vector<std::string> warnings;
};

struct ClassifyParams;

/// Group-wise cross-validation. External: segments of single-component
/// entries, classified against the other folds. Internal: linkage detection
/// within each multi-component group, excluding segments whose true label is
/// external. Functional is the positive class in both.
EvaluationReport evaluate(const CorpusIndex& index, int folds, std::uint64_t seed, const ClassifyParams& params,
                          double alpha = 0.86);

/// Content hash of an entry plus the shape parameters; keys the sidecar cache.
std::string entry_hash(const CorpusEntry& entry, const ShapeParams& shape);

}  // namespace fabseg
