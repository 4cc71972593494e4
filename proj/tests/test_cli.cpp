#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "fabseg/classify.hpp"
#include "fabseg/json_io.hpp"
#include "fabseg/stylize.hpp"
#include "support.hpp"

using namespace fabseg;

namespace {

struct Run {
  int code;
  std::string err;
};

Run cli(const TempDir& dir, const std::string& args, const std::string& env = {}) {
  const std::string err = dir / "stderr.txt";
  const std::string cmd = env + " " FABSEG_CLI " --quiet " + args + " > " + (dir / "stdout.txt") + " 2> " + err;
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(err)};
}

}  // namespace

TEST_CASE("cli exit codes and error envelope") {
  TempDir dir("cli-errors");
  write_file(dir / "bad.obj", "v 0 0 0\nf 1 2 3\n");

  CHECK(cli(dir, "link --thing " + (dir / "none") + " --alpha 1.5").code == 1);
  CHECK(cli(dir, "link --thing " + (dir / "none") + " --alpha -0.1").code == 1);
  auto no_corpus = cli(dir, "classify --in x.obj --seg s.json", "FABSEG_CORPUS=");
  CHECK(no_corpus.code == 1);
  CHECK(no_corpus.err.find("Usage") != std::string::npos);
  CHECK(cli(dir, "").code == 1);
  CHECK(cli(dir, "segment --in x.obj").code == 1);
  CHECK(cli(dir, "frobnicate").code == 1);

  auto missing = cli(dir, "--json segment --in " + (dir / "missing.obj") + " --out " + (dir / "s.json"));
  CHECK(missing.code == 2);
  const Json envelope = Json::parse(missing.err);
  CHECK(envelope["error"]["code"] == 2);
  CHECK(envelope["error"]["message"].is_string());
  CHECK(cli(dir, "segment --in " + (dir / "bad.obj") + " --out " + (dir / "s.json")).code == 2);
  auto usage = cli(dir, "--json link --thing x --alpha 2");
  CHECK(Json::parse(usage.err)["error"]["kind"] == "usage");
}

TEST_CASE("cli pipeline reproduces the library") {
  TempDir dir("cli-pipeline");
  REQUIRE(cli(dir, "corpus synth --out " + (dir / "corpus")).code == 0);
  REQUIRE(cli(dir, "corpus index --manifest " + (dir / "corpus/manifest.json") + " --out " + (dir / "index") +
                       " --base-points 100")
              .code == 0);
  const std::string mesh_path = dir / "corpus/vase-amphora.obj";
  REQUIRE(cli(dir, "--seed 3 segment --in " + mesh_path + " --k 3 --out " + (dir / "seg.json")).code == 0);
  REQUIRE(cli(dir, "classify --in " + mesh_path + " --seg " + (dir / "seg.json") + " --out " + (dir / "report.json"),
              "FABSEG_CORPUS=" + (dir / "index"))
              .code == 0);
  REQUIRE(cli(dir, "--seed 5 stylize --in " + mesh_path + " --seg " + (dir / "seg.json") + " --labels " +
                       (dir / "report.json") + " --amplitude 0.8 --freq 3 --palette '1,0,0;0,0,1' --out " +
                       (dir / "styled.obj"))
              .code == 0);

  const TriangleMesh mesh = load_mesh(mesh_path);
  SegmentParams params;
  params.seed = 3;
  const SegmentationResult seg = segment(mesh, 3, params);
  CHECK(Json::parse(read_file(dir / "seg.json")) == Json(seg));

  const CorpusIndex index = load_index(dir / "index");
  ClassificationReport report = classify_external(mesh, seg, index);
  report.mesh_id = "vase-amphora";
  CHECK(Json::parse(read_file(dir / "report.json")) == Json(report));

  std::vector<FunctionalityLabel> labels;
  for (const auto& s : report.segments) labels.push_back(s.label);
  StyleSpec spec;
  spec.amplitude = 0.8;
  spec.frequency = 3;
  spec.palette = {{1, 0, 0}, {0, 0, 1}};
  spec.seed = 5;
  const TriangleMesh styled = apply_style(mesh, build_mask(mesh, seg, labels), spec);
  const TriangleMesh from_cli = load_mesh(dir / "styled.obj");
  CHECK(from_cli.vertices == styled.vertices);
  CHECK(from_cli.faces == styled.faces);
  REQUIRE(from_cli.vertex_colors);
  CHECK((*from_cli.vertex_colors - *styled.vertex_colors).cwiseAbs().maxCoeff() <= 1e-15);

  // a two-part thing links through the CLI as it does in the library
  const std::string thing = dir / "thing";
  std::filesystem::create_directories(thing);
  std::filesystem::copy(dir / "corpus/snap-jar-vessel.obj", thing + "/vessel.obj");
  std::filesystem::copy(dir / "corpus/snap-jar-lid.obj", thing + "/lid.obj");
  REQUIRE(cli(dir, "link --thing " + thing + " --alpha 0.86 --corpus " + (dir / "index") + " --out " +
                       (dir / "thing.json"))
              .code == 0);
  const Json linked = Json::parse(read_file(dir / "thing.json"));
  CHECK(linked["linkages"]["alpha"] == 0.86);
  CHECK(linked["components"].size() == 2);
  CHECK(cli(dir, "stylize --in " + thing + "/lid.obj --seg " + (dir / "seg.json") + " --labels " +
                     (dir / "thing.json") + " --out " + (dir / "x.obj"))
            .code == 2);  // segmentation of another mesh

  REQUIRE(cli(dir, "corpus eval --corpus " + (dir / "index") + " --folds 2 --out " + (dir / "eval.json")).code == 0);
  const Json eval = Json::parse(read_file(dir / "eval.json"));
  CHECK(eval["folds"] == 2);
  CHECK(eval.contains("external"));
}
