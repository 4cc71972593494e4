#pragma once

#include <string>
#include <vector>

#include "fabseg/corpus.hpp"

namespace fabseg {

/// A revolved part: profile points (radius, z) and the label of each span.
/// spans.size() must be points.size() - 1.
struct ProfilePart {
  std::vector<Eigen::Vector2d> points;
  std::vector<int> spans;  // segment id per span
};

/// Revolves a profile whose first and last points lie on the axis. Spans are
/// split so edges stay near `edge` long; the face labels follow the spans.
CorpusEntry make_labeled_revolved(const std::string& thing_id, const ProfilePart& profile,
                                  const std::vector<FunctionalityLabel>& labels, int segments = 48, double edge = 0.0);

CorpusEntry make_vase(const std::string& id, double height, double belly, double neck, double base);
CorpusEntry make_planter(const std::string& id, double height, double radius, double flare);
CorpusEntry make_stand(const std::string& id, double height, double base_radius, double column, double plate);

/// Two halves of a container: a vessel with a cylindrical socket in its top
/// and a lid with the matching plug. Plug and socket are internal-functional.
std::vector<CorpusEntry> make_snap_fit_pair(const std::string& group, double radius, double height,
                                            double plug_radius, double plug_depth);

/// Ten single-component models (vases, planters, stands) followed by three
/// snap-fit pairs. Mesh paths are "<thing_id>.obj".
std::vector<CorpusEntry> starter_corpus();

/// Writes the starter OBJ files and manifest.json into dir; returns the manifest path.
std::string write_starter_corpus(const std::string& dir);

}  // namespace fabseg
