#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "fabseg/classify.hpp"
#include "fabseg/error.hpp"
#include "fabseg/starter.hpp"

using namespace fabseg;

namespace {

const ShapeParams kFast{100, 4, 0.5, 0};
constexpr auto A = FunctionalityLabel::Aesthetic;
constexpr auto FE = FunctionalityLabel::FunctionalExternal;
constexpr auto FI = FunctionalityLabel::FunctionalInternal;

const CorpusIndex& starter_index() {
  static const CorpusIndex index = build_index(starter_corpus(), kFast);
  return index;
}

struct OracleVote {
  double contextual;
  std::string thing_id;
  int segment;
  FunctionalityLabel label;
};

// Straight re-derivation of the vote: every mesh similarity, every candidate
// segment, full sorts, then a count.
std::vector<FunctionalityLabel> oracle_labels(const PreparedMesh& q, const CorpusIndex& index,
                                              std::vector<std::vector<OracleVote>>* evidence = nullptr) {
  std::vector<std::pair<double, std::string>> meshes;
  for (const auto& m : index.meshes) meshes.emplace_back(mrg_similarity(q.mesh_mrg, m.mrg, index.shape.weight).value, m.thing_id);
  std::sort(meshes.begin(), meshes.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  meshes.resize(std::min<std::size_t>(5, meshes.size()));
  std::vector<FunctionalityLabel> out;
  for (const auto& seg : q.segment_mrgs) {
    std::vector<OracleVote> all;
    for (const auto& [sim, id] : meshes)
      for (const auto& s : index.find(id)->segments)
        all.push_back({sim * mrg_similarity(seg, s.mrg, index.shape.weight).value, id, s.segment_id, s.label});
    std::sort(all.begin(), all.end(), [](const OracleVote& a, const OracleVote& b) {
      if (a.contextual != b.contextual) return a.contextual > b.contextual;
      if (a.thing_id != b.thing_id) return a.thing_id < b.thing_id;
      return a.segment < b.segment;
    });
    all.resize(std::min<std::size_t>(5, all.size()));
    int functional = 0;
    for (const auto& v : all) functional += v.label != A;
    out.push_back(2 * functional >= static_cast<int>(all.size()) ? FE : A);
    if (evidence) evidence->push_back(all);
  }
  return out;
}

LinkComponent component(const CorpusEntry& e, bool truth_external = true) {
  LinkComponent c;
  c.mesh_id = e.thing_id;
  c.prepared = prepare_mesh(e.mesh, e.segmentation, kFast);
  for (auto l : e.labels) c.external_labels.push_back(truth_external && l == FE ? FE : A);
  return c;
}

std::set<std::pair<SegmentRef, SegmentRef>> pair_set(const LinkageSet& s) {
  std::set<std::pair<SegmentRef, SegmentRef>> out;
  for (const auto& p : s.pairs) out.emplace(p.first, p.second);
  return out;
}

}  // namespace

TEST_CASE("majority vote examples") {
  CHECK(majority_label({FE, FE, A, FE, A}) == FE);
  CHECK(majority_label({FI, A, A, FE, A}) == A);
  CHECK(majority_label({FI, A}) == FE);
  CHECK(majority_label({A, A, FI, FE}) == FE);
  CHECK_THROWS_AS(majority_label({}), Error);
}

TEST_CASE("classifier matches the brute-force oracle on the starter corpus") {
  const auto& index = starter_index();
  const auto corpus = starter_corpus();
  int identical_aesthetic_cases = 0;
  for (const auto& e : corpus) {
    const PreparedMesh q = prepare_mesh(e.mesh, e.segmentation, kFast);
    const auto report = classify_external(q, index);
    std::vector<std::vector<OracleVote>> evidence;
    const auto expected = oracle_labels(q, index, &evidence);
    REQUIRE(report.segments.size() == expected.size());
    CHECK(report.mesh_neighbors.size() == 5);
    for (std::size_t s = 0; s < expected.size(); ++s) {
      CHECK(report.segments[s].label == expected[s]);
      REQUIRE(report.segments[s].votes.size() == evidence[s].size());
      for (std::size_t v = 0; v < evidence[s].size(); ++v) {
        CHECK(report.segments[s].votes[v].thing_id == evidence[s][v].thing_id);
        CHECK(report.segments[s].votes[v].segment_id == evidence[s][v].segment);
      }
      // its own copy first, then four aesthetic neighbors
      const auto& ev = evidence[s];
      if (ev.size() == 5 && ev[0].thing_id == e.thing_id && ev[0].label == A &&
          std::all_of(ev.begin(), ev.end(), [](const OracleVote& v) { return v.label == A; })) {
        ++identical_aesthetic_cases;
        CHECK(report.segments[s].label == A);
      }
    }
  }
  CHECK(identical_aesthetic_cases > 0);

  // spectral segmentations of a query outside the corpus
  auto query = make_vase("query-vase", 100, 30, 11, 20);
  auto seg = segment(query.mesh, 3);
  const PreparedMesh q = prepare_mesh(query.mesh, seg, kFast);
  const auto report = classify_external(q, index);
  const auto expected = oracle_labels(q, index);
  for (std::size_t s = 0; s < expected.size(); ++s) CHECK(report.segments[s].label == expected[s]);
}

TEST_CASE("classify_external edge cases") {
  auto pair = make_snap_fit_pair("snap", 30, 60, 10, 12);
  // one corpus mesh with a functional and an aesthetic segment: every vote splits 1-1
  auto lid_only = build_index({pair[1]}, kFast);
  auto report = classify_external(pair[0].mesh, pair[0].segmentation, lid_only);
  for (const auto& s : report.segments) {
    CHECK(s.votes.size() == 2);
    CHECK(s.label == FE);
  }
  CHECK(report.mesh_neighbors.size() == 1);

  const MeshFilter none = [](const IndexedMesh&) { return false; };
  CHECK_THROWS_AS(classify_external(prepare_mesh(pair[0].mesh, pair[0].segmentation, kFast), lid_only, {}, none), Error);
  CHECK_THROWS_AS(classify_external(pair[0].mesh, pair[0].segmentation, CorpusIndex{}), InvalidArgument);
}

TEST_CASE("match_linkages examples") {
  const SegmentRef a{"m1", 0}, b{"m2", 0}, c{"m3", 0};
  CHECK(match_linkages({{a, b, 0.87}}, 0.86).pairs.size() == 1);
  CHECK(match_linkages({{a, b, 0.86}}, 0.86).pairs.empty());

  const std::vector<Linkage> three{{a, c, 0.90}, {a, b, 0.95}, {b, c, 0.10}};
  auto got = match_linkages(three, 0.86);
  REQUIRE(got.pairs.size() == 1);
  CHECK(got.pairs[0].first == a);
  CHECK(got.pairs[0].second == b);
  // brute force: every matching of the three segments, best total similarity above alpha
  double best = -1.0;
  std::pair<SegmentRef, SegmentRef> best_pair;
  for (const auto& l : three)
    if (l.similarity > 0.86 && l.similarity > best) {
      best = l.similarity;
      best_pair = {l.first, l.second};
    }
  CHECK(best_pair == std::pair{got.pairs[0].first, got.pairs[0].second});

  CHECK_THROWS_AS(match_linkages({{a, b, 0.9}}, 1.5), InvalidArgument);
  CHECK_THROWS_AS(match_linkages({{a, {"m1", 1}, 0.9}}, 0.5), InvalidArgument);
}

TEST_CASE("linkage matching properties on fuzzed candidates") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Linkage> cands;
    const int meshes = 2 + static_cast<int>(rng() % 3);
    for (int i = 0; i < meshes; ++i)
      for (int j = i + 1; j < meshes; ++j)
        for (int s = 0; s < 3; ++s)
          for (int t = 0; t < 3; ++t)
            if (rng() % 2) cands.push_back({{"m" + std::to_string(i), s}, {"m" + std::to_string(j), t}, std::round(u(rng) * 20) / 20});
    std::set<std::pair<SegmentRef, SegmentRef>> previous;
    bool first = true;
    for (double alpha : {0.95, 0.86, 0.7, 0.5}) {
      auto set = match_linkages(cands, alpha);
      std::set<SegmentRef> seen;
      for (const auto& p : set.pairs) {
        CHECK(p.similarity > alpha);
        CHECK(p.first.mesh_id != p.second.mesh_id);
        CHECK(seen.insert(p.first).second);
        CHECK(seen.insert(p.second).second);
      }
      auto shuffled = cands;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (auto& l : shuffled)
        if (rng() % 2) std::swap(l.first, l.second);
      const auto now = pair_set(set);
      CHECK(pair_set(match_linkages(shuffled, alpha)) == now);
      // a higher threshold only ever drops pairs
      if (!first) CHECK(std::includes(now.begin(), now.end(), previous.begin(), previous.end()));
      first = false;
      previous = now;
    }
  }
}

TEST_CASE("snap-fit pairs link exactly plug and socket") {
  const auto corpus = starter_corpus();
  std::map<std::string, std::vector<CorpusEntry>> groups;
  for (const auto& e : corpus)
    if (e.composition == Composition::Multi) groups[e.group()].push_back(e);
  REQUIRE(groups.size() == 3);
  for (const auto& [group, members] : groups) {
    CAPTURE(group);
    REQUIRE(members.size() == 2);
    std::vector<LinkComponent> comps{component(members[0]), component(members[1])};
    auto set = detect_linkages(comps, 0.86);
    REQUIRE(set.pairs.size() == 1);
    for (const auto& ref : {set.pairs[0].first, set.pairs[0].second}) {
      const auto& owner = ref.mesh_id == members[0].thing_id ? members[0] : members[1];
      CHECK(owner.labels[ref.segment_id] == FI);
    }
    CHECK(set.pairs[0].similarity > 0.86);
    // contextual similarity is the product of its factors
    const double mesh = mrg_similarity(comps[0].prepared.mesh_mrg, comps[1].prepared.mesh_mrg).value;
    CHECK(set.pairs[0].similarity <= mesh);

    std::set<std::pair<SegmentRef, SegmentRef>> previous;
    bool first = true;
    for (double alpha : {0.95, 0.86, 0.7, 0.5}) {
      auto now = pair_set(detect_linkages(comps, alpha));
      if (!first) CHECK(std::includes(now.begin(), now.end(), previous.begin(), previous.end()));
      previous = now;
      first = false;
    }
  }
}

TEST_CASE("detect_linkages ordering, exclusion and single component") {
  const auto corpus = starter_corpus();
  std::vector<LinkComponent> comps;
  for (const auto& e : corpus)
    if (e.thing_id.rfind("snap-jar", 0) == 0 || e.thing_id == "snap-box-lid") comps.push_back(component(e));
  REQUIRE(comps.size() == 3);
  const auto base = pair_set(detect_linkages(comps, 0.5));
  auto reversed = comps;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(pair_set(detect_linkages(reversed, 0.5)) == base);
  std::rotate(reversed.begin(), reversed.begin() + 1, reversed.end());
  CHECK(pair_set(detect_linkages(reversed, 0.5)) == base);

  auto excluded = comps;
  std::fill(excluded[0].external_labels.begin(), excluded[0].external_labels.end(), FE);
  for (const auto& p : detect_linkages(excluded, 0.0).pairs) {
    CHECK(p.first.mesh_id != excluded[0].mesh_id);
    CHECK(p.second.mesh_id != excluded[0].mesh_id);
  }

  auto single = detect_linkages({comps[0]}, 0.86);
  CHECK(single.pairs.empty());
  CHECK(single.warnings.size() == 1);
  CHECK_THROWS_AS(detect_linkages(comps, -0.1), InvalidArgument);
}

TEST_CASE("classify_thing") {
  const auto& index = starter_index();
  auto vase = make_vase("my-vase", 100, 30, 11, 20);
  auto single = classify_thing({{vase.thing_id, vase.mesh, vase.segmentation}}, index);
  CHECK(single.linkages.pairs.empty());
  REQUIRE(single.labels.size() == 1);
  for (auto l : single.labels[0]) CHECK(l != FI);

  auto pair = make_snap_fit_pair("mine", 30, 60, 10, 12);
  std::vector<ThingComponent> comps;
  for (const auto& e : pair) comps.push_back({e.thing_id, e.mesh, e.segmentation});
  auto thing = classify_thing(comps, index, 0.86);
  REQUIRE(thing.labels.size() == 2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t s = 0; s < thing.labels[c].size(); ++s) {
      const auto external = thing.components[c].segments[s].label;
      if (external == FE) CHECK(thing.labels[c][s] == FE);
      else CHECK(thing.labels[c][s] != FE);
    }
  for (const auto& p : thing.linkages.pairs) {
    const auto& owner = p.first.mesh_id == comps[0].mesh_id ? thing.labels[0] : thing.labels[1];
    CHECK(owner[p.first.segment_id] != A);
  }
}

TEST_CASE("evaluation on a corpus whose neighbors share labels") {
  std::vector<CorpusEntry> entries;
  for (int i = 0; i < 12; ++i) {
    auto v = make_vase("vase-" + std::to_string(100 + i), 120, 45, 14, 28);
    entries.push_back(v);
  }
  for (const char* g : {"snap-a", "snap-b"}) {
    auto pair = make_snap_fit_pair(g, 30, 60, 10, 12);
    entries.insert(entries.end(), pair.begin(), pair.end());
  }
  auto index = build_index(entries, kFast);
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    auto r = evaluate(index, 2, seed, ClassifyParams{});
    CAPTURE(seed);
    REQUIRE(r.external.precision.has_value());
    REQUIRE(r.external.recall.has_value());
    REQUIRE(r.internal.precision.has_value());
    REQUIRE(r.internal.recall.has_value());
    CHECK(*r.external.precision == 1.0);
    CHECK(*r.external.recall == 1.0);
    CHECK(*r.internal.precision == 1.0);
    CHECK(*r.internal.recall == 1.0);
  }
}
