#include <doctest.h>

#include <fstream>

#include "fabseg/classify.hpp"
#include "fabseg/error.hpp"
#include "fabseg/json_io.hpp"
#include "fabseg/starter.hpp"
#include "fabseg/synth.hpp"
#include "support.hpp"

using namespace fabseg;

namespace {

const ShapeParams kFast{100, 4, 0.5, 0};

Json entry_json(const CorpusEntry& e) {
  return Json{{"thing_id", e.thing_id},
              {"mesh", e.mesh_path},
              {"category", to_string(e.category)},
              {"composition", to_string(e.composition)},
              {"segmentation", {{"k", e.segmentation.k}, {"face_labels", e.segmentation.face_labels}}},
              {"labels", labels_to_json(e.labels)}};
}

CorpusEntry find_entry(const std::vector<CorpusEntry>& all, const std::string& id) {
  for (const auto& e : all)
    if (e.thing_id == id) return e;
  FAIL("no starter entry " << id);
  return {};
}

std::vector<CorpusEntry> three_entries() {
  const auto all = starter_corpus();
  return {find_entry(all, "planter-small"), find_entry(all, "stand-phone"), find_entry(all, "vase-bud")};
}

std::string slurp(const std::string& path) { return read_file(path); }

}  // namespace

TEST_CASE("ingest examples") {
  TempDir dir("ingest");
  const auto entries = three_entries();
  for (const auto& e : entries) save_mesh(e.mesh, dir / e.mesh_path);

  SUBCASE("two valid entries") {
    Json m = Json::array({entry_json(entries[0]), entry_json(entries[1])});
    auto r = ingest_manifest(m.dump(), dir.str());
    CHECK(r.entries.size() == 2);
    CHECK(r.rejected.empty());
    CHECK(r.entries[0].segmentation.k == 4);
  }
  SUBCASE("three labels for k = 4") {
    Json bad = entry_json(entries[0]);
    bad["labels"].erase(bad["labels"].size() - 1);
    auto r = ingest_manifest(Json::array({bad, entry_json(entries[2])}).dump(), dir.str());
    CHECK(r.entries.size() == 1);
    REQUIRE(r.rejected.size() == 1);
    CHECK(r.rejected[0].index == 0);
    CHECK(r.rejected[0].reason == "label_count_mismatch");
    CHECK(r.rejected[0].detail.find("label-count mismatch") != std::string::npos);
  }
  SUBCASE("empty manifest") {
    auto r = ingest_manifest("[]", dir.str());
    CHECK(r.entries.empty());
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("every rejection carries a reason") {
    Json missing = entry_json(entries[0]);
    missing["mesh"] = "nowhere.obj";
    Json unknown = entry_json(entries[1]);
    unknown["labels"][0] = "decorative";
    Json dup = entry_json(entries[2]);
    Json mismatch = entry_json(entries[2]);
    mismatch["thing_id"] = "other";
    mismatch["segmentation"]["face_labels"].erase(0);
    Json not_object = 42;
    Json bad_category = entry_json(entries[1]);
    bad_category["thing_id"] = "x";
    bad_category["category"] = "toy";
    write_file(dir / "broken.obj", "v 0 0 0\nf 1 2 3\n");
    Json broken = entry_json(entries[0]);
    broken["thing_id"] = "broken";
    broken["mesh"] = "broken.obj";
    Json m = Json::array({missing, unknown, dup, dup, mismatch, not_object, bad_category, broken});
    auto r = ingest_manifest(m.dump(), dir.str());
    CHECK(r.entries.size() == 1);
    std::vector<std::string> reasons;
    for (const auto& rej : r.rejected) {
      CHECK_FALSE(rej.detail.empty());
      reasons.push_back(rej.reason);
    }
    CHECK(reasons == std::vector<std::string>{"missing_file", "unknown_label", "duplicate_id", "segmentation_mismatch",
                                              "invalid_field", "invalid_field", "parse_error"});
  }
  SUBCASE("entries without segmentation are segmented with k = label count") {
    Json e = entry_json(entries[2]);
    e.erase("segmentation");
    auto r = ingest_manifest(Json::array({e}).dump(), dir.str());
    REQUIRE(r.entries.size() == 1);
    CHECK(r.entries[0].segmentation.k == 3);
    CHECK(r.entries[0].segmentation.face_labels.size() == static_cast<std::size_t>(r.entries[0].mesh.num_faces()));
  }
  CHECK_THROWS_AS(ingest_manifest("{\"not\": \"array\"}", dir.str()), Error);
  CHECK_THROWS_AS(ingest_manifest("[", dir.str()), Error);
}

TEST_CASE("starter corpus round trips through its manifest") {
  TempDir dir("starter");
  const std::string manifest = write_starter_corpus(dir.str());
  auto r = ingest(manifest);
  CHECK(r.rejected.empty());
  const auto expected = starter_corpus();
  REQUIRE(r.entries.size() == expected.size());
  CHECK(expected.size() <= 20);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(r.entries[i].thing_id == expected[i].thing_id);
    CHECK(r.entries[i].labels == expected[i].labels);
    CHECK(r.entries[i].group() == expected[i].group());
    CHECK(r.entries[i].mesh.num_faces() == expected[i].mesh.num_faces());
  }
}

TEST_CASE("build_index counts, cache and repair") {
  TempDir dir("index");
  const auto entries = three_entries();
  BuildStats stats;
  auto index = build_index(entries, kFast, dir.str(), &stats);
  CHECK(index.meshes.size() == 3);
  CHECK(index.segment_count() == 11);
  CHECK(stats.mesh_mrgs_computed == 3);
  CHECK(stats.segment_mrgs_computed == 11);
  CHECK(std::filesystem::exists(dir.path() / "manifest.json"));
  CHECK(std::filesystem::exists(dir.path() / "hashes.json"));
  CHECK(std::filesystem::exists(dir.path() / "mrg" / "vase-bud.mrg1"));
  CHECK(std::filesystem::exists(dir.path() / "mrg" / "vase-bud.s2.mrg1"));
  const std::string first_manifest = slurp(dir / "manifest.json");

  BuildStats again;
  auto cached = build_index(entries, kFast, dir.str(), &again);
  CHECK(again.mesh_mrgs_computed == 0);
  CHECK(again.segment_mrgs_computed == 0);
  CHECK(again.cache_hits == 3);
  CHECK(slurp(dir / "manifest.json") == first_manifest);

  {
    std::string bytes = slurp(dir / "mrg/stand-phone.s1.mrg1");
    bytes[bytes.size() / 2] ^= 0x21;
    write_file(dir / "mrg/stand-phone.s1.mrg1", bytes);
  }
  BuildStats repair;
  auto repaired = build_index(entries, kFast, dir.str(), &repair);
  CHECK(repair.sidecars_repaired == 1);
  CHECK(repair.mesh_mrgs_computed == 1);
  CHECK(repair.segment_mrgs_computed == 4);
  CHECK(serialize_mrg(repaired.meshes[1].segments[1].mrg) == serialize_mrg(index.meshes[1].segments[1].mrg));

  // determinism: a fresh directory reproduces the same bytes
  TempDir other("index2");
  build_index(entries, kFast, other.str());
  CHECK(slurp(other / "manifest.json") == first_manifest);
  CHECK(slurp(other / "mrg/planter-small.s3.mrg1") == slurp(dir / "mrg/planter-small.s3.mrg1"));

  auto loaded = load_index(dir.str());
  REQUIRE(loaded.meshes.size() == 3);
  CHECK(loaded.manifest_hash == index.manifest_hash);
  CHECK(loaded.meshes[2].segments.size() == 3);
  CHECK(serialize_mrg(loaded.meshes[2].mrg) == serialize_mrg(index.meshes[2].mrg));
  CHECK(loaded.meshes[0].segments[0].label == FunctionalityLabel::FunctionalExternal);

  CHECK_THROWS_AS(build_index({}, kFast), InvalidArgument);
  CHECK_THROWS_AS(load_index((dir.path() / "missing").string()), Error);
}

TEST_CASE("query_similar_meshes") {
  const auto entries = three_entries();
  auto index = build_index(entries, kFast);

  auto self = query_similar_meshes(entries[1].mesh, index, 5);
  REQUIRE(self.size() == 3);
  CHECK(self[0].thing_id == "stand-phone");
  CHECK(self[0].similarity >= 1.0 - 1e-6);
  for (std::size_t i = 1; i < self.size(); ++i) CHECK(self[i - 1].similarity >= self[i].similarity);
  CHECK(query_similar_meshes(entries[1].mesh, index, 1).size() == 1);

  auto twins = entries;
  twins.push_back(entries[2]);
  twins.back().thing_id = "a-copy";
  twins[2].thing_id = "b-copy";
  auto twin_index = build_index(twins, kFast);
  auto ranked = query_similar_meshes(entries[2].mesh, twin_index, 2);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0].similarity == ranked[1].similarity);
  CHECK(ranked[0].thing_id == "a-copy");
  CHECK(ranked[1].thing_id == "b-copy");

  CHECK_THROWS_AS(query_similar_meshes(entries[0].mesh, CorpusIndex{}, 5), InvalidArgument);
  CHECK_THROWS_AS(query_similar_meshes(entries[0].mesh, index, 0), InvalidArgument);
}

TEST_CASE("evaluate preconditions and undefined metrics") {
  const auto entries = three_entries();
  auto one = build_index({entries[0]}, kFast);
  CHECK_THROWS_AS(evaluate(one, 2, 0, ClassifyParams{}), InvalidArgument);
  auto three = build_index(entries, kFast);
  CHECK_THROWS_AS(evaluate(three, 1, 0, ClassifyParams{}), InvalidArgument);

  auto report = evaluate(three, 3, 7, ClassifyParams{});
  // no multi-component groups: the internal task has no positives at all
  CHECK_FALSE(report.internal.precision.has_value());
  CHECK_FALSE(report.internal.recall.has_value());
  Json j = report;
  CHECK(j["internal"]["precision"].is_null());
  CHECK(report.external.true_positive + report.external.false_negative > 0);
  CHECK(report.external.recall.has_value());

  Metric m;
  m.false_positive = 2;
  m.true_negative = 5;
  m.finish();
  CHECK(*m.precision == 0.0);
  CHECK_FALSE(m.recall.has_value());
}
