#pragma once

#include <string>
#include <vector>

#include "fabseg/corpus.hpp"

namespace fabseg {

struct ClassifyParams {
  int n_meshes = 5;    // most similar corpus meshes considered
  int n_segments = 5;  // voting neighbors per segment
  bool raw_linkage = false;  // rank linkage candidates by segment similarity alone
};

/// Signatures of a query mesh and each of its segments.
struct PreparedMesh {
  MRG mesh_mrg;
  std::vector<MRG> segment_mrgs;
  std::vector<bool> disconnected;
};

PreparedMesh prepare_mesh(const TriangleMesh& mesh, const SegmentationResult& segmentation, const ShapeParams& shape);

struct Vote {
  std::string thing_id;
  int segment_id = 0;
  FunctionalityLabel label = FunctionalityLabel::Aesthetic;
  double mesh_similarity = 0.0;
  double segment_similarity = 0.0;
  double contextual = 0.0;
};

struct SegmentReport {
  int segment_id = 0;
  FunctionalityLabel label = FunctionalityLabel::Aesthetic;
  int functional_votes = 0;
  int aesthetic_votes = 0;
  std::vector<Vote> votes;  // ranked by contextual similarity
};

struct ClassificationReport {
  std::string mesh_id;
  std::vector<SegmentReport> segments;
  std::vector<MeshMatch> mesh_neighbors;
};

/// Uniform-weight majority over binary labels; an even split is functional.
FunctionalityLabel majority_label(const std::vector<FunctionalityLabel>& votes);

/// kNN vote over the segments of the n_meshes most similar corpus meshes,
/// ranked by contextual similarity. Uniform weights; an even split is
/// functional. `allowed` restricts the corpus (used by cross-validation).
ClassificationReport classify_external(const PreparedMesh& query, const CorpusIndex& index,
                                       const ClassifyParams& params = {}, const MeshFilter& allowed = {});
ClassificationReport classify_external(const TriangleMesh& mesh, const SegmentationResult& segmentation,
                                       const CorpusIndex& index, const ClassifyParams& params = {});

struct SegmentRef {
  std::string mesh_id;
  int segment_id = 0;

  auto operator<=>(const SegmentRef&) const = default;
};

struct Linkage {
  SegmentRef first;  // first < second
  SegmentRef second;
  double similarity = 0.0;
};

struct LinkageSet {
  double alpha = 0.86;
  std::vector<Linkage> pairs;  // in the order they were formed
  std::vector<std::string> warnings;
};

/// Greedy matching: candidates by descending similarity (ties by the pair
/// ids), each accepted when strictly above alpha and both ends are free.
LinkageSet match_linkages(std::vector<Linkage> candidates, double alpha);

struct LinkComponent {
  std::string mesh_id;
  PreparedMesh prepared;
  std::vector<FunctionalityLabel> external_labels;  // per segment; functional_external is excluded
};

/// Cross-component linkages. Similarity is contextual (segment times parent
/// mesh) unless raw is set.
LinkageSet detect_linkages(const std::vector<LinkComponent>& components, double alpha = 0.86, bool raw = false);

struct ThingComponent {
  std::string mesh_id;
  TriangleMesh mesh;
  SegmentationResult segmentation;
};

struct ThingReport {
  std::vector<ClassificationReport> components;
  LinkageSet linkages;
  std::vector<std::vector<FunctionalityLabel>> labels;  // final, per component and segment
};

/// External vote on every component, then linkage detection across them.
/// Final labels: functional_external over functional_internal over aesthetic.
ThingReport classify_thing(const std::vector<ThingComponent>& components, const CorpusIndex& index,
                           double alpha = 0.86, const ClassifyParams& params = {});

/// Applies the label precedence to external labels and a linkage set.
std::vector<std::vector<FunctionalityLabel>> combine_labels(const std::vector<std::string>& mesh_ids,
                                                            const std::vector<ClassificationReport>& reports,
                                                            const LinkageSet& linkages);

}  // namespace fabseg
