#include "fabseg/classify.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "fabseg/error.hpp"
#include "fabseg/parallel.hpp"
#include "fabseg/rng.hpp"

namespace fabseg {

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
}

bool vote_before(const Vote& a, const Vote& b) {
  if (a.contextual != b.contextual) return a.contextual > b.contextual;
  if (a.thing_id != b.thing_id) return a.thing_id < b.thing_id;
  return a.segment_id < b.segment_id;
}

PreparedMesh prepared_from_index(const IndexedMesh& m) {
  PreparedMesh p;
  p.mesh_mrg = m.mrg;
  for (const auto& s : m.segments) {
    p.segment_mrgs.push_back(s.mrg);
    p.disconnected.push_back(s.disconnected);
  }
  return p;
}

}  // namespace

PreparedMesh prepare_mesh(const TriangleMesh& mesh, const SegmentationResult& segmentation, const ShapeParams& shape) {
  if (static_cast<Index>(segmentation.face_labels.size()) != mesh.num_faces())
    throw InvalidArgument("segmentation has " + std::to_string(segmentation.face_labels.size()) +
                          " labels for a mesh with " + std::to_string(mesh.num_faces()) + " faces");
  PreparedMesh p;
  p.mesh_mrg = shape_signature(mesh, shape);
  const auto k = static_cast<std::size_t>(segmentation.k);
  p.segment_mrgs.resize(k);
  std::vector<char> disconnected(k, 0);
  parallel_for(k, [&](std::size_t s) {
    const SegmentMesh part = segment_submesh(mesh, segmentation, static_cast<int>(s));
    disconnected[s] = part.disconnected;
    p.segment_mrgs[s] = shape_signature(part.mesh, shape);
  });
  p.disconnected.assign(disconnected.begin(), disconnected.end());
  return p;
}

FunctionalityLabel majority_label(const std::vector<FunctionalityLabel>& votes) {
  if (votes.empty()) throw Error("corpus exhausted: no votes");
  const auto functional = std::count_if(votes.begin(), votes.end(), is_functional);
  return 2 * functional >= static_cast<long>(votes.size()) ? FunctionalityLabel::FunctionalExternal
                                                           : FunctionalityLabel::Aesthetic;
}

ClassificationReport classify_external(const PreparedMesh& query, const CorpusIndex& index,
                                       const ClassifyParams& params, const MeshFilter& allowed) {
  if (params.n_meshes < 1 || params.n_segments < 1) throw InvalidArgument("n_meshes and n_segments must be positive");
  if (index.meshes.empty()) throw InvalidArgument("corpus index is empty");
  ClassificationReport report;
  report.mesh_neighbors = query_similar_meshes(query.mesh_mrg, index, params.n_meshes, allowed);
  std::size_t pool = 0;
  for (const auto& n : report.mesh_neighbors) pool += index.meshes[n.mesh].segments.size();
  if (pool == 0) throw Error("corpus exhausted: no candidate segments to vote");

  const double weight = index.shape.weight;
  report.segments.resize(query.segment_mrgs.size());
  parallel_for(query.segment_mrgs.size(), [&](std::size_t s) {
    std::vector<Vote> votes;
    for (const auto& n : report.mesh_neighbors)
      for (const auto& cand : index.meshes[n.mesh].segments) {
        Vote v;
        v.thing_id = n.thing_id;
        v.segment_id = cand.segment_id;
        v.label = cand.label;
        v.mesh_similarity = n.similarity;
        v.segment_similarity = mrg_similarity(query.segment_mrgs[s], cand.mrg, weight).value;
        v.contextual = contextual_similarity(v.mesh_similarity, v.segment_similarity);
        votes.push_back(std::move(v));
      }
    std::sort(votes.begin(), votes.end(), vote_before);
    if (votes.size() > static_cast<std::size_t>(params.n_segments)) votes.resize(static_cast<std::size_t>(params.n_segments));
    SegmentReport& r = report.segments[s];
    r.segment_id = static_cast<int>(s);
    std::vector<FunctionalityLabel> ballot;
    for (const auto& v : votes) {
      (is_functional(v.label) ? r.functional_votes : r.aesthetic_votes)++;
      ballot.push_back(v.label);
    }
    r.label = majority_label(ballot);
    r.votes = std::move(votes);
  });
  return report;
}

ClassificationReport classify_external(const TriangleMesh& mesh, const SegmentationResult& segmentation,
                                       const CorpusIndex& index, const ClassifyParams& params) {
  if (index.meshes.empty()) throw InvalidArgument("corpus index is empty");
  return classify_external(prepare_mesh(mesh, segmentation, index.shape), index, params);
}

LinkageSet match_linkages(std::vector<Linkage> candidates, double alpha) {
  check_alpha(alpha);
  for (auto& c : candidates) {
    if (c.first.mesh_id == c.second.mesh_id) throw InvalidArgument("linkage candidates must join different meshes");
    if (c.second < c.first) std::swap(c.first, c.second);
  }
  std::sort(candidates.begin(), candidates.end(), [](const Linkage& a, const Linkage& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
  LinkageSet out;
  out.alpha = alpha;
  std::set<SegmentRef> used;
  for (const auto& c : candidates) {
    if (!(c.similarity > alpha)) break;
    if (used.count(c.first) || used.count(c.second)) continue;
    used.insert(c.first);
    used.insert(c.second);
    out.pairs.push_back(c);
  }
  return out;
}

LinkageSet detect_linkages(const std::vector<LinkComponent>& components, double alpha, bool raw) {
  check_alpha(alpha);
  if (components.size() < 2) {
    LinkageSet out;
    out.alpha = alpha;
    out.warnings.push_back("a single component has no cross-component linkages");
    return out;
  }
  std::vector<const LinkComponent*> sorted;
  for (const auto& c : components) {
    if (c.external_labels.size() != c.prepared.segment_mrgs.size())
      throw InvalidArgument("component '" + c.mesh_id + "' has " + std::to_string(c.external_labels.size()) +
                            " labels for " + std::to_string(c.prepared.segment_mrgs.size()) + " segments");
    sorted.push_back(&c);
  }
  // similarities are evaluated in id order so the result does not depend on the input order
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->mesh_id < b->mesh_id; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i]->mesh_id == sorted[i - 1]->mesh_id) throw InvalidArgument("duplicate component id '" + sorted[i]->mesh_id + "'");

  std::vector<std::pair<std::size_t, std::size_t>> mesh_pairs;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    for (std::size_t j = i + 1; j < sorted.size(); ++j) mesh_pairs.emplace_back(i, j);
  std::vector<std::vector<Linkage>> found(mesh_pairs.size());
  parallel_for(mesh_pairs.size(), [&](std::size_t p) {
    const LinkComponent& a = *sorted[mesh_pairs[p].first];
    const LinkComponent& b = *sorted[mesh_pairs[p].second];
    const double mesh_sim = raw ? 1.0 : mrg_similarity(a.prepared.mesh_mrg, b.prepared.mesh_mrg).value;
    for (std::size_t s = 0; s < a.external_labels.size(); ++s) {
      if (a.external_labels[s] == FunctionalityLabel::FunctionalExternal) continue;
      for (std::size_t t = 0; t < b.external_labels.size(); ++t) {
        if (b.external_labels[t] == FunctionalityLabel::FunctionalExternal) continue;
        const double seg_sim = mrg_similarity(a.prepared.segment_mrgs[s], b.prepared.segment_mrgs[t]).value;
        found[p].push_back({{a.mesh_id, static_cast<int>(s)},
                            {b.mesh_id, static_cast<int>(t)},
                            contextual_similarity(mesh_sim, seg_sim)});
      }
    }
  });
  std::vector<Linkage> candidates;
  for (auto& f : found) candidates.insert(candidates.end(), f.begin(), f.end());
  return match_linkages(std::move(candidates), alpha);
}

std::vector<std::vector<FunctionalityLabel>> combine_labels(const std::vector<std::string>& mesh_ids,
                                                            const std::vector<ClassificationReport>& reports,
                                                            const LinkageSet& linkages) {
  if (mesh_ids.size() != reports.size()) throw InvalidArgument("one report per component is required");
  std::vector<std::vector<FunctionalityLabel>> labels(reports.size());
  std::map<std::string, std::size_t> position;
  for (std::size_t c = 0; c < reports.size(); ++c) {
    position[mesh_ids[c]] = c;
    for (const auto& s : reports[c].segments) labels[c].push_back(s.label);
  }
  auto mark = [&](const SegmentRef& r) {
    auto it = position.find(r.mesh_id);
    if (it == position.end() || r.segment_id < 0 || r.segment_id >= static_cast<int>(labels[it->second].size()))
      throw InvalidArgument("linkage refers to an unknown segment");
    auto& label = labels[it->second][r.segment_id];
    if (label == FunctionalityLabel::Aesthetic) label = FunctionalityLabel::FunctionalInternal;
  };
  for (const auto& l : linkages.pairs) {
    mark(l.first);
    mark(l.second);
  }
  return labels;
}

ThingReport classify_thing(const std::vector<ThingComponent>& components, const CorpusIndex& index, double alpha,
                           const ClassifyParams& params) {
  check_alpha(alpha);
  if (components.empty()) throw InvalidArgument("a thing needs at least one component");
  ThingReport out;
  std::vector<LinkComponent> link;
  std::vector<std::string> ids;
  for (const auto& c : components) {
    LinkComponent lc;
    lc.mesh_id = c.mesh_id;
    lc.prepared = prepare_mesh(c.mesh, c.segmentation, index.shape);
    ClassificationReport report = classify_external(lc.prepared, index, params);
    report.mesh_id = c.mesh_id;
    for (const auto& s : report.segments) lc.external_labels.push_back(s.label);
    out.components.push_back(std::move(report));
    ids.push_back(c.mesh_id);
    link.push_back(std::move(lc));
  }
  out.linkages = detect_linkages(link, alpha, params.raw_linkage);
  out.labels = combine_labels(ids, out.components, out.linkages);
  return out;
}

EvaluationReport evaluate(const CorpusIndex& index, int folds, std::uint64_t seed, const ClassifyParams& params,
                          double alpha) {
  if (folds < 2) throw InvalidArgument("evaluation needs at least two folds");
  if (index.meshes.size() < static_cast<std::size_t>(folds))
    throw InvalidArgument("corpus has " + std::to_string(index.meshes.size()) + " entries, fewer than " +
                          std::to_string(folds) + " folds");
  EvaluationReport report;
  report.folds = folds;
  report.seed = seed;

  // folds are drawn over groups so the components of one design stay together
  std::vector<std::string> groups;
  for (const auto& m : index.meshes) groups.push_back(m.group);
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  Rng rng(seed);
  for (std::size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[uniform_index(rng, i)]);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < groups.size(); ++i) fold_of[groups[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  if (groups.size() < static_cast<std::size_t>(folds))
    report.warnings.push_back("fewer groups than folds; some folds are empty");

  const std::size_t n = index.meshes.size();
  std::vector<Metric> external(n);
  std::vector<std::string> failures(n);
  parallel_for(n, [&](std::size_t i) {
    const IndexedMesh& m = index.meshes[i];
    if (m.composition != Composition::Single) return;
    const int held = fold_of[m.group];
    const MeshFilter others = [&](const IndexedMesh& c) { return fold_of.at(c.group) != held; };
    ClassificationReport r;
    try {
      r = classify_external(prepared_from_index(m), index, params, others);
    } catch (const Error& e) {
      failures[i] = m.thing_id + ": " + e.what();
      return;
    }
    for (std::size_t s = 0; s < m.segments.size(); ++s) {
      const bool truth = is_functional(m.segments[s].label);
      const bool predicted = is_functional(r.segments[s].label);
      if (truth && predicted) ++external[i].true_positive;
      else if (!truth && predicted) ++external[i].false_positive;
      else if (truth) ++external[i].false_negative;
      else ++external[i].true_negative;
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    report.external.true_positive += external[i].true_positive;
    report.external.false_positive += external[i].false_positive;
    report.external.false_negative += external[i].false_negative;
    report.external.true_negative += external[i].true_negative;
    if (!failures[i].empty()) report.warnings.push_back(failures[i]);
  }

  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i)
    if (index.meshes[i].composition == Composition::Multi) members[index.meshes[i].group].push_back(i);
  for (const auto& [group, ids] : members) {
    if (ids.size() < 2) {
      report.warnings.push_back("group '" + group + "' has a single component; skipped for linkage");
      continue;
    }
    std::vector<LinkComponent> comps;
    for (std::size_t i : ids) {
      LinkComponent c;
      c.mesh_id = index.meshes[i].thing_id;
      c.prepared = prepared_from_index(index.meshes[i]);
      for (const auto& s : index.meshes[i].segments)
        c.external_labels.push_back(s.label == FunctionalityLabel::FunctionalExternal ? s.label
                                                                                      : FunctionalityLabel::Aesthetic);
      comps.push_back(std::move(c));
    }
    const LinkageSet links = detect_linkages(comps, alpha, params.raw_linkage);
    std::set<SegmentRef> linked;
    for (const auto& l : links.pairs) {
      linked.insert(l.first);
      linked.insert(l.second);
    }
    for (std::size_t i : ids)
      for (const auto& s : index.meshes[i].segments) {
        if (s.label == FunctionalityLabel::FunctionalExternal) continue;
        const bool truth = s.label == FunctionalityLabel::FunctionalInternal;
        const bool predicted = linked.count({index.meshes[i].thing_id, s.segment_id}) > 0;
        if (truth && predicted) ++report.internal.true_positive;
        else if (!truth && predicted) ++report.internal.false_positive;
        else if (truth) ++report.internal.false_negative;
        else ++report.internal.true_negative;
      }
  }
  report.external.finish();
  report.internal.finish();
  return report;
}

}  // namespace fabseg
