#include "fabseg/json_io.hpp"

#include "fabseg/error.hpp"

namespace fabseg {

void to_json(Json& j, const SegmentParams& p) {
  j = Json{{"delta", p.delta},   {"eta_convex", p.eta_convex}, {"window", p.window},
           {"k_min", p.k_min},   {"k_max", p.effective_k_max()}};
}

void from_json(const Json& j, SegmentParams& p) {
  p.delta = j.value("delta", p.delta);
  p.eta_convex = j.value("eta_convex", p.eta_convex);
  p.window = j.value("window", p.window);
  p.k_min = j.value("k_min", p.k_min);
  p.k_max = j.value("k_max", p.k_max);
}

void to_json(Json& j, const SegmentationResult& s) {
  j = Json{{"k", s.k},
           {"predicted_k", s.predicted_k},
           {"requested_k", s.requested_k ? Json(*s.requested_k) : Json(nullptr)},
           {"seed", s.seed},
           {"face_labels", s.face_labels},
           {"params", s.params},
           {"eigenvalues", s.eigenvalues},
           {"warnings", s.warnings}};
}

void from_json(const Json& j, SegmentationResult& s) {
  if (!j.is_object() || !j.contains("face_labels") || !j["face_labels"].is_array())
    throw InvalidArgument("segmentation needs a face_labels array");
  s = SegmentationResult{};
  s.face_labels = j["face_labels"].get<std::vector<int>>();
  int max_label = -1;
  for (int l : s.face_labels) {
    if (l < 0) throw InvalidArgument("negative segment label");
    max_label = std::max(max_label, l);
  }
  rebuild_segments(s);
  if (s.k != max_label + 1) throw InvalidArgument("segment labels must cover 0..k-1");
  if (j.contains("k") && !j["k"].is_null() && j["k"].get<int>() != s.k)
    throw InvalidArgument("k = " + std::to_string(j["k"].get<int>()) + " but face_labels use " +
                          std::to_string(s.k) + " segments");
  s.predicted_k = j.value("predicted_k", s.k);
  if (j.contains("requested_k") && !j["requested_k"].is_null()) s.requested_k = j["requested_k"].get<int>();
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("params")) s.params = j["params"].get<SegmentParams>();
  s.params.seed = s.seed;
  if (j.contains("eigenvalues")) s.eigenvalues = j["eigenvalues"].get<std::vector<double>>();
  if (j.contains("warnings")) s.warnings = j["warnings"].get<std::vector<std::string>>();
}

void to_json(Json& j, const ShapeParams& p) {
  j = Json{{"base_points", p.base_points}, {"resolution", p.resolution}, {"weight", p.weight}, {"seed", p.seed}};
}

void from_json(const Json& j, ShapeParams& p) {
  p.base_points = j.value("base_points", p.base_points);
  p.resolution = j.value("resolution", p.resolution);
  p.weight = j.value("weight", p.weight);
  p.seed = j.value("seed", p.seed);
}

void to_json(Json& j, const MRG& g) {
  j = Json{{"resolution", g.resolution}, {"levels", Json::array()}};
  for (const auto& level : g.levels) {
    Json nodes = Json::array();
    for (const auto& n : level.nodes)
      nodes.push_back({{"interval", n.interval},
                       {"area", n.area},
                       {"length", n.length},
                       {"parent", n.parent},
                       {"face_count", n.face_count}});
    Json edges = Json::array();
    for (const auto& [a, b] : level.edges) edges.push_back({a, b});
    j["levels"].push_back({{"nodes", nodes}, {"edges", edges}});
  }
}

void to_json(Json& j, const MeshMatch& m) { j = Json{{"thing_id", m.thing_id}, {"similarity", m.similarity}}; }

void to_json(Json& j, const Vote& v) {
  j = Json{{"thing_id", v.thing_id},
           {"segment_id", v.segment_id},
           {"label", to_string(v.label)},
           {"mesh_similarity", v.mesh_similarity},
           {"segment_similarity", v.segment_similarity},
           {"contextual_similarity", v.contextual}};
}

void to_json(Json& j, const SegmentReport& r) {
  j = Json{{"segment_id", r.segment_id},
           {"label", to_string(r.label)},
           {"functional_votes", r.functional_votes},
           {"aesthetic_votes", r.aesthetic_votes},
           {"votes", r.votes}};
}

void to_json(Json& j, const ClassificationReport& r) {
  j = Json{{"mesh_id", r.mesh_id}, {"segments", r.segments}, {"mesh_neighbors", r.mesh_neighbors}};
}

void to_json(Json& j, const SegmentRef& r) { j = Json{{"mesh_id", r.mesh_id}, {"segment_id", r.segment_id}}; }

void to_json(Json& j, const Linkage& l) {
  j = Json{{"first", l.first}, {"second", l.second}, {"similarity", l.similarity}};
}

void to_json(Json& j, const LinkageSet& s) {
  j = Json{{"alpha", s.alpha}, {"pairs", s.pairs}, {"warnings", s.warnings}};
}

void to_json(Json& j, const ThingReport& r) {
  Json labels = Json::array();
  for (const auto& per_mesh : r.labels) labels.push_back(labels_to_json(per_mesh));
  j = Json{{"components", r.components}, {"linkages", r.linkages}, {"labels", labels}};
}

void from_json(const Json& j, MeshMatch& m) {
  m.thing_id = j.at("thing_id").get<std::string>();
  m.similarity = j.at("similarity").get<double>();
}

void from_json(const Json& j, Vote& v) {
  v.thing_id = j.at("thing_id").get<std::string>();
  v.segment_id = j.at("segment_id").get<int>();
  v.label = parse_label(j.at("label").get<std::string>());
  v.mesh_similarity = j.at("mesh_similarity").get<double>();
  v.segment_similarity = j.at("segment_similarity").get<double>();
  v.contextual = j.at("contextual_similarity").get<double>();
}

void from_json(const Json& j, SegmentReport& r) {
  r.segment_id = j.at("segment_id").get<int>();
  r.label = parse_label(j.at("label").get<std::string>());
  r.functional_votes = j.at("functional_votes").get<int>();
  r.aesthetic_votes = j.at("aesthetic_votes").get<int>();
  r.votes = j.at("votes").get<std::vector<Vote>>();
}

void from_json(const Json& j, ClassificationReport& r) {
  r.mesh_id = j.at("mesh_id").get<std::string>();
  r.segments = j.at("segments").get<std::vector<SegmentReport>>();
  r.mesh_neighbors = j.at("mesh_neighbors").get<std::vector<MeshMatch>>();
}

void from_json(const Json& j, SegmentRef& r) {
  r.mesh_id = j.at("mesh_id").get<std::string>();
  r.segment_id = j.at("segment_id").get<int>();
}

void from_json(const Json& j, Linkage& l) {
  l.first = j.at("first").get<SegmentRef>();
  l.second = j.at("second").get<SegmentRef>();
  l.similarity = j.at("similarity").get<double>();
}

void from_json(const Json& j, LinkageSet& s) {
  s.alpha = j.at("alpha").get<double>();
  s.pairs = j.at("pairs").get<std::vector<Linkage>>();
  s.warnings = j.value("warnings", std::vector<std::string>{});
}

void from_json(const Json& j, ThingReport& r) {
  r.components = j.at("components").get<std::vector<ClassificationReport>>();
  r.linkages = j.at("linkages").get<LinkageSet>();
  r.labels.clear();
  for (const auto& per_mesh : j.at("labels")) r.labels.push_back(labels_from_json(per_mesh));
}

void to_json(Json& j, const Metric& m) {
  j = Json{{"true_positive", m.true_positive},
           {"false_positive", m.false_positive},
           {"false_negative", m.false_negative},
           {"true_negative", m.true_negative},
           {"precision", m.precision ? Json(*m.precision) : Json(nullptr)},
           {"recall", m.recall ? Json(*m.recall) : Json(nullptr)}};
}

void to_json(Json& j, const EvaluationReport& r) {
  j = Json{{"folds", r.folds},
           {"seed", r.seed},
           {"external", r.external},
           {"internal", r.internal},
           {"warnings", r.warnings}};
}

void to_json(Json& j, const StyleSpec& s) {
  Json palette = Json::array();
  for (const auto& c : s.palette) palette.push_back({c[0], c[1], c[2]});
  j = Json{{"amplitude", s.amplitude}, {"frequency", s.frequency}, {"octaves", s.octaves}, {"palette", palette},
           {"seed", s.seed}};
}

void from_json(const Json& j, StyleSpec& s) {
  if (!j.is_object()) throw InvalidArgument("style spec must be an object");
  s.amplitude = j.value("amplitude", s.amplitude);
  s.frequency = j.value("frequency", s.frequency);
  s.octaves = j.value("octaves", s.octaves);
  s.seed = j.value("seed", s.seed);
  if (j.contains("palette")) {
    s.palette.clear();
    for (const auto& c : j["palette"]) {
      if (!c.is_array() || c.size() != 3) throw InvalidArgument("palette entries must be [r, g, b]");
      s.palette.push_back({c[0].get<double>(), c[1].get<double>(), c[2].get<double>()});
    }
  }
}

Json style_provenance(const StyleSpec& spec, const TriangleMesh& input, const VertexMask& mask,
                      const TriangleMesh& output) {
  return Json{{"style", spec},
              {"noise", "perlin-fbm"},
              {"vertices", input.num_vertices()},
              {"faces", input.num_faces()},
              {"masked_vertices", mask.masked_count()},
              {"input_hash", hex64(fnv1a(write_obj(input)))},
              {"output_hash", hex64(fnv1a(write_obj(output)))}};
}

std::vector<FunctionalityLabel> labels_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidArgument("labels must be an array of label tokens");
  std::vector<FunctionalityLabel> out;
  for (const auto& token : j) {
    if (!token.is_string()) throw InvalidArgument("label tokens must be strings");
    out.push_back(parse_label(token.get<std::string>()));
  }
  return out;
}

Json labels_to_json(const std::vector<FunctionalityLabel>& labels) {
  Json out = Json::array();
  for (auto l : labels) out.push_back(std::string(to_string(l)));
  return out;
}

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace fabseg
