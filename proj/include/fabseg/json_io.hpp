#pragma once

#include <json.hpp>

#include "fabseg/classify.hpp"
#include "fabseg/corpus.hpp"
#include "fabseg/spectral.hpp"
#include "fabseg/stylize.hpp"

namespace fabseg {

using Json = nlohmann::json;

// Field names double as the wire format of the service and the CLI.

void to_json(Json& j, const SegmentParams& p);
void from_json(const Json& j, SegmentParams& p);

/// {"k","predicted_k","requested_k","seed","face_labels","params","eigenvalues","warnings"}
void to_json(Json& j, const SegmentationResult& s);
/// Only face_labels is required; k, when present, must match the labels.
void from_json(const Json& j, SegmentationResult& s);

void to_json(Json& j, const ShapeParams& p);
void from_json(const Json& j, ShapeParams& p);

void to_json(Json& j, const MRG& g);

void to_json(Json& j, const MeshMatch& m);
void to_json(Json& j, const Vote& v);
void to_json(Json& j, const SegmentReport& r);
void to_json(Json& j, const ClassificationReport& r);
void to_json(Json& j, const SegmentRef& r);
void to_json(Json& j, const Linkage& l);
void to_json(Json& j, const LinkageSet& s);
void to_json(Json& j, const ThingReport& r);
void from_json(const Json& j, MeshMatch& m);
void from_json(const Json& j, Vote& v);
void from_json(const Json& j, SegmentReport& r);
void from_json(const Json& j, ClassificationReport& r);
void from_json(const Json& j, SegmentRef& r);
void from_json(const Json& j, Linkage& l);
void from_json(const Json& j, LinkageSet& s);
void from_json(const Json& j, ThingReport& r);
void to_json(Json& j, const Metric& m);
void to_json(Json& j, const EvaluationReport& r);

void to_json(Json& j, const StyleSpec& s);
/// Missing fields keep their defaults.
void from_json(const Json& j, StyleSpec& s);

/// Sidecar describing how a stylized mesh was produced.
Json style_provenance(const StyleSpec& spec, const TriangleMesh& input, const VertexMask& mask,
                      const TriangleMesh& output);

std::vector<FunctionalityLabel> labels_from_json(const Json& j);
Json labels_to_json(const std::vector<FunctionalityLabel>& labels);

/// Parses text and reports malformed JSON as fabseg::Error.
Json parse_json(std::string_view text);

}  // namespace fabseg
