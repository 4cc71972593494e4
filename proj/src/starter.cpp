#include "fabseg/starter.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "fabseg/error.hpp"
#include "fabseg/json_io.hpp"
#include "fabseg/synth.hpp"

namespace fabseg {

namespace {

using P = Eigen::Vector2d;
constexpr auto A = FunctionalityLabel::Aesthetic;
constexpr auto FE = FunctionalityLabel::FunctionalExternal;
constexpr auto FI = FunctionalityLabel::FunctionalInternal;

}  // namespace

CorpusEntry make_labeled_revolved(const std::string& thing_id, const ProfilePart& profile,
                                  const std::vector<FunctionalityLabel>& labels, int segments, double edge) {
  const auto& pts = profile.points;
  if (pts.size() < 2 || profile.spans.size() + 1 != pts.size())
    throw InvalidArgument("profile needs one span label per consecutive point pair");
  if (pts.front().x() != 0.0 || pts.back().x() != 0.0) throw InvalidArgument("profile must start and end on the axis");
  double max_radius = 0.0;
  for (const auto& p : pts) max_radius = std::max(max_radius, p.x());
  if (edge <= 0.0) edge = 2.0 * std::numbers::pi * max_radius / segments;

  std::vector<P> dense{pts.front()};
  std::vector<int> dense_span;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const int pieces = std::max(1, static_cast<int>(std::ceil((pts[i + 1] - pts[i]).norm() / edge)));
    for (int k = 1; k <= pieces; ++k) {
      dense.push_back(pts[i] + (pts[i + 1] - pts[i]) * (static_cast<double>(k) / pieces));
      dense_span.push_back(profile.spans[i]);
    }
  }
  FaceTags tags;
  CorpusEntry e;
  e.thing_id = thing_id;
  e.mesh_path = thing_id + ".obj";
  e.mesh = make_revolved(dense, segments, false, &tags);
  e.mesh.name = thing_id;
  e.segmentation.face_labels.resize(tags.size());
  for (std::size_t f = 0; f < tags.size(); ++f) e.segmentation.face_labels[f] = dense_span[tags[f]];
  rebuild_segments(e.segmentation);
  e.segmentation.predicted_k = e.segmentation.k;
  if (static_cast<int>(labels.size()) != e.segmentation.k) throw InvalidArgument("label-count mismatch");
  e.labels = labels;
  return e;
}

CorpusEntry make_vase(const std::string& id, double height, double belly, double neck, double base) {
  ProfilePart p;
  p.points = {P(0, 0), P(base, 0), P(belly, 0.35 * height), P(0.85 * belly, 0.6 * height), P(neck, 0.85 * height),
              P(1.2 * neck, height), P(0, height)};
  p.spans = {0, 1, 1, 1, 1, 2};
  return make_labeled_revolved(id, p, {FE, A, A});
}

CorpusEntry make_planter(const std::string& id, double height, double radius, double flare) {
  const double top = 1.1 * height;
  ProfilePart p;
  p.points = {P(0, 0), P(0.75 * radius, 0), P(radius, height), P(radius + flare, height), P(radius + flare, top),
              P(0.9 * radius, top), P(0, top)};
  p.spans = {0, 1, 2, 2, 2, 3};
  auto e = make_labeled_revolved(id, p, {FE, A, A, FE});
  return e;
}

CorpusEntry make_stand(const std::string& id, double height, double base_radius, double column, double plate) {
  ProfilePart p;
  p.points = {P(0, 0),
              P(base_radius, 0),
              P(base_radius, 0.08 * height),
              P(column, 0.14 * height),
              P(column, 0.9 * height),
              P(plate, 0.9 * height),
              P(plate, height),
              P(0, height)};
  p.spans = {0, 1, 1, 2, 3, 3, 3};
  return make_labeled_revolved(id, p, {FE, A, A, FE});
}

std::vector<CorpusEntry> make_snap_fit_pair(const std::string& group, double radius, double height,
                                            double plug_radius, double plug_depth) {
  ProfilePart vessel;
  vessel.points = {P(0, 0), P(radius, 0), P(radius, height), P(plug_radius, height), P(plug_radius, height - plug_depth),
                   P(0, height - plug_depth)};
  vessel.spans = {0, 1, 1, 2, 2};
  ProfilePart lid;
  const double lid_height = height;
  lid.points = {P(0, -plug_depth), P(plug_radius, -plug_depth), P(plug_radius, 0), P(radius, 0), P(radius, lid_height),
                P(0, lid_height)};
  lid.spans = {0, 0, 1, 1, 1};
  std::vector<CorpusEntry> out;
  out.push_back(make_labeled_revolved(group + "-vessel", vessel, {FE, A, FI}));
  out.push_back(make_labeled_revolved(group + "-lid", lid, {FI, A}));
  for (auto& e : out) {
    e.category = Category::TaskRelated;
    e.composition = Composition::Multi;
    e.component_of = group;
  }
  return out;
}

std::vector<CorpusEntry> starter_corpus() {
  std::vector<CorpusEntry> out;
  out.push_back(make_vase("vase-amphora", 120, 45, 14, 28));
  out.push_back(make_vase("vase-bud", 90, 22, 7, 16));
  out.push_back(make_vase("vase-squat", 70, 50, 24, 35));
  out.push_back(make_vase("vase-tall", 160, 35, 12, 25));
  out.push_back(make_planter("planter-small", 60, 40, 6));
  out.push_back(make_planter("planter-wide", 70, 70, 10));
  out.push_back(make_planter("planter-deep", 110, 50, 8));
  out.push_back(make_stand("stand-phone", 90, 40, 8, 30));
  out.push_back(make_stand("stand-cake", 120, 60, 12, 90));
  out.push_back(make_stand("stand-lamp", 200, 55, 10, 40));
  for (auto& pair : {make_snap_fit_pair("snap-jar", 30, 60, 10, 12), make_snap_fit_pair("snap-box", 45, 70, 16, 15),
                     make_snap_fit_pair("snap-tube", 35, 75, 14, 20)})
    out.insert(out.end(), pair.begin(), pair.end());
  return out;
}

std::string write_starter_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Json manifest = Json::array();
  for (const auto& e : starter_corpus()) {
    save_mesh(e.mesh, (fs::path(dir) / e.mesh_path).string());
    Json entry{{"thing_id", e.thing_id},
               {"mesh", e.mesh_path},
               {"category", to_string(e.category)},
               {"composition", to_string(e.composition)},
               {"segmentation", {{"k", e.segmentation.k}, {"face_labels", e.segmentation.face_labels}}},
               {"labels", labels_to_json(e.labels)}};
    if (!e.component_of.empty()) entry["component_of"] = e.component_of;
    manifest.push_back(std::move(entry));
  }
  const std::string path = (fs::path(dir) / "manifest.json").string();
  write_file(path, manifest.dump(1) + "\n");
  return path;
}

}  // namespace fabseg
