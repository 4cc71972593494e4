#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "fabseg/classify.hpp"
#include "fabseg/corpus.hpp"
#include "fabseg/error.hpp"
#include "fabseg/json_io.hpp"
#include "fabseg/parallel.hpp"
#include "fabseg/remesh.hpp"
#include "fabseg/service.hpp"
#include "fabseg/starter.hpp"
#include "fabseg/stylize.hpp"

namespace fs = std::filesystem;
using namespace fabseg;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  bool quiet = false;
  bool json = false;
};

Globals g;

void info(const std::string& line) {
  if (!g.quiet && !g.json) std::cout << line << "\n";
}

void emit(const Json& result) {
  if (g.json) std::cout << result.dump() << "\n";
}

void write_json(const std::string& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

Json read_json(const std::string& path) { return parse_json(read_file(path)); }

void write_mesh(const TriangleMesh& mesh, const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".stl" || ext == ".STL") write_file(path, write_stl(mesh));
  else write_file(path, write_obj(mesh, 17));
}

std::string corpus_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FABSEG_CORPUS"); env && *env) return env;
  return {};
}

SegmentationResult read_segmentation(const std::string& path, const TriangleMesh& mesh) {
  SegmentationResult seg = read_json(path).get<SegmentationResult>();
  if (seg.face_labels.size() != static_cast<std::size_t>(mesh.num_faces()))
    throw InvalidArgument("segmentation has " + std::to_string(seg.face_labels.size()) + " labels but the mesh has " +
                          std::to_string(mesh.num_faces()) + " faces");
  return seg;
}

/// Label tokens from a plain array, a classification report, or a thing
/// report (which needs the component's mesh id).
std::vector<FunctionalityLabel> read_labels(const std::string& path, const std::string& component) {
  const Json j = read_json(path);
  if (j.is_array()) return labels_from_json(j);
  if (j.contains("segments")) {
    std::vector<FunctionalityLabel> out;
    for (const auto& s : j["segments"]) out.push_back(parse_label(s.at("label").get<std::string>()));
    return out;
  }
  if (j.contains("components") && j.contains("labels")) {
    const auto& comps = j["components"];
    for (std::size_t i = 0; i < comps.size(); ++i)
      if (comps.size() == 1 || comps[i].at("mesh_id") == component) return labels_from_json(j["labels"].at(i));
    throw InvalidArgument("thing report has no component '" + component + "' (use --component)");
  }
  throw InvalidArgument("labels file must hold a label array or a report");
}

std::vector<Rgb> parse_palette(const std::string& text) {
  std::vector<Rgb> palette;
  std::stringstream colors(text);
  std::string color;
  while (std::getline(colors, color, ';')) {
    Rgb rgb{};
    std::stringstream channels(color);
    std::string ch;
    int n = 0;
    while (std::getline(channels, ch, ',')) {
      if (n == 3) throw UsageError("palette colors take three channels");
      try {
        rgb[n++] = std::stod(ch);
      } catch (const std::exception&) {
        throw UsageError("bad palette channel '" + ch + "'");
      }
    }
    if (n != 3) throw UsageError("palette colors take three channels: r,g,b;r,g,b");
    palette.push_back(rgb);
  }
  return palette;
}

/// Components of a thing directory: every mesh file, with <stem>.seg.json
/// next to it when present.
std::vector<ThingComponent> read_thing(const std::string& dir, const SegmentParams& params) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".obj" || ext == ".stl" || ext == ".OBJ" || ext == ".STL"))
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ThingComponent> comps;
  for (const auto& f : files) {
    ThingComponent c;
    c.mesh_id = f.stem().string();
    c.mesh = load_mesh(f.string());
    const fs::path seg = f.parent_path() / (c.mesh_id + ".seg.json");
    c.segmentation = fs::exists(seg) ? read_segmentation(seg.string(), c.mesh) : segment(c.mesh, std::nullopt, params);
    comps.push_back(std::move(c));
  }
  if (comps.empty()) throw Error("no mesh files in " + dir);
  return comps;
}

Json sweep_json(const std::string& name, const std::vector<SweepPoint>& sweep, std::optional<long> stable) {
  Json points = Json::array();
  for (const auto& p : sweep)
    points.push_back({{"resolution", p.resolution},
                      {"faces", p.faces},
                      {"predicted_k", p.predicted_k},
                      {"remesh_seconds", p.remesh_seconds},
                      {"segment_seconds", p.wall_seconds}});
  return Json{{"model", name}, {"points", points}, {"stabilization_resolution", stable ? Json(*stable) : Json(nullptr)}};
}

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functionality-aware segmentation, classification and stylization of 3D-printable meshes"};
  app.require_subcommand(1);
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", g.quiet, "Suppress progress text");
  app.add_flag("--json", g.json, "Machine-readable stdout; errors as one JSON object on stderr");

  SegmentParams seg_params;
  auto add_seg_flags = [&](CLI::App* cmd) {
    cmd->add_option("--delta", seg_params.delta, "Geodesic vs angular weight")->capture_default_str();
    cmd->add_option("--eta-convex", seg_params.eta_convex, "Convex dihedral damping")->capture_default_str();
    cmd->add_option("--window", seg_params.window, "Eigenvalues considered by k prediction")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  };

  // remesh
  auto* remesh_cmd = app.add_subcommand("remesh", "Bring a mesh to a uniform face count");
  std::string in, out;
  long resolution = 25000;
  remesh_cmd->add_option("--in", in, "Input OBJ/STL")->required();
  remesh_cmd->add_option("--out", out, "Output OBJ/STL")->required();
  remesh_cmd->add_option("--resolution", resolution, "Target faces")->check(CLI::PositiveNumber)->capture_default_str();

  // segment
  auto* segment_cmd = app.add_subcommand("segment", "Spectral segmentation");
  std::optional<int> k;
  segment_cmd->add_option("--in", in, "Input OBJ/STL")->required();
  segment_cmd->add_option("--out", out, "Segmentation JSON")->required();
  segment_cmd->add_option("--k", k, "Segment count (predicted when omitted)")->check(CLI::PositiveNumber);
  add_seg_flags(segment_cmd);

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "Label the segments of one mesh from its corpus neighbors");
  std::string seg_path, corpus;
  ClassifyParams cls;
  classify_cmd->add_option("--in", in, "Input OBJ/STL")->required();
  classify_cmd->add_option("--seg", seg_path, "Segmentation JSON")->required();
  classify_cmd->add_option("--corpus", corpus, "Corpus index directory (default $FABSEG_CORPUS)");
  classify_cmd->add_option("--out", out, "Report JSON");
  classify_cmd->add_option("--n-meshes", cls.n_meshes, "Neighbor meshes")->check(CLI::PositiveNumber)->capture_default_str();
  classify_cmd->add_option("--n-segments", cls.n_segments, "Voting segments")->check(CLI::PositiveNumber)->capture_default_str();

  // link
  auto* link_cmd = app.add_subcommand("link", "Detect internal linkages between the parts of a thing");
  std::string thing_dir;
  double alpha = 0.86;
  link_cmd->add_option("--thing", thing_dir, "Directory of component meshes (<name>.seg.json optional)")->required();
  link_cmd->add_option("--alpha", alpha, "Similarity threshold in [0, 1]")->capture_default_str();
  link_cmd->add_option("--corpus", corpus, "Corpus index directory (default $FABSEG_CORPUS)");
  link_cmd->add_option("--out", out, "Thing report JSON");
  link_cmd->add_flag("--raw", cls.raw_linkage, "Compare segments without mesh context");
  add_seg_flags(link_cmd);

  // stylize
  auto* stylize_cmd = app.add_subcommand("stylize", "Displace and color aesthetic vertices");
  std::string labels_path, component, palette_text;
  StyleSpec style;
  stylize_cmd->add_option("--in", in, "Input OBJ/STL")->required();
  stylize_cmd->add_option("--seg", seg_path, "Segmentation JSON")->required();
  stylize_cmd->add_option("--labels", labels_path, "Label array, classification report or thing report")->required();
  stylize_cmd->add_option("--component", component, "Mesh id inside a thing report");
  stylize_cmd->add_option("--amplitude", style.amplitude, "Maximum displacement")->capture_default_str();
  stylize_cmd->add_option("--freq", style.frequency, "Noise cycles across the bounding diagonal")->capture_default_str();
  stylize_cmd->add_option("--octaves", style.octaves, "Noise octaves")->capture_default_str();
  stylize_cmd->add_option("--palette", palette_text, "Colors as r,g,b;r,g,b with channels in [0, 1]");
  stylize_cmd->add_option("--out", out, "Output OBJ/STL")->required();
  std::string provenance_path;
  stylize_cmd->add_option("--provenance", provenance_path, "Write a provenance JSON record here");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Predicted k across remeshing resolutions");
  std::vector<std::string> inputs;
  std::vector<long> resolutions{15000, 20000, 25000, 30000, 35000};
  bool starter = false;
  int min_agreeing = 2;
  sweep_cmd->add_option("--in", inputs, "Input meshes");
  sweep_cmd->add_flag("--starter", starter, "Sweep the bundled synthetic models");
  sweep_cmd->add_option("--resolutions", resolutions, "Face counts")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--min-agreeing", min_agreeing, "Resolutions that must share the final k")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep_cmd->add_option("--out", out, "Sweep JSON");
  add_seg_flags(sweep_cmd);

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Corpus management");
  corpus_cmd->require_subcommand(1);
  auto* synth_cmd = corpus_cmd->add_subcommand("synth", "Write the bundled starter corpus");
  std::string dir;
  synth_cmd->add_option("--out", dir, "Directory")->required();
  auto* ingest_cmd = corpus_cmd->add_subcommand("ingest", "Validate a manifest");
  std::string manifest;
  long corpus_resolution = 0;
  ingest_cmd->add_option("--manifest", manifest, "Manifest JSON")->required();
  ingest_cmd->add_option("--resolution", corpus_resolution, "Remesh unsegmented entries to this many faces");
  auto* index_cmd = corpus_cmd->add_subcommand("index", "Build or refresh a corpus index");
  ShapeParams shape;
  index_cmd->add_option("--manifest", manifest, "Manifest JSON")->required();
  index_cmd->add_option("--out", dir, "Index directory")->required();
  index_cmd->add_option("--resolution", corpus_resolution, "Remesh unsegmented entries to this many faces");
  index_cmd->add_option("--base-points", shape.base_points, "Geodesic base points")->check(CLI::PositiveNumber)->capture_default_str();
  index_cmd->add_option("--mrg-resolution", shape.resolution, "Reeb graph levels")->check(CLI::Range(1, 12))->capture_default_str();
  index_cmd->add_option("--weight", shape.weight, "Area vs length weight")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  auto* eval_cmd = corpus_cmd->add_subcommand("eval", "Grouped k-fold evaluation");
  int folds = 5;
  eval_cmd->add_option("--corpus", corpus, "Corpus index directory (default $FABSEG_CORPUS)");
  eval_cmd->add_option("--folds", folds, "Folds")->check(CLI::Range(2, 1000))->capture_default_str();
  eval_cmd->add_option("--alpha", alpha, "Linkage threshold in [0, 1]")->capture_default_str();
  eval_cmd->add_option("--out", out, "Report JSON");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP JSON API");
  ServiceOptions svc;
  serve_cmd->add_option("--host", svc.host)->capture_default_str();
  serve_cmd->add_option("--port", svc.port, "0 picks a free port")->check(CLI::Range(0, 65535))->capture_default_str();
  serve_cmd->add_option("--corpus", corpus, "Corpus index directory (default $FABSEG_CORPUS, else the starter corpus)");
  serve_cmd->add_option("--workers", svc.workers, "Concurrent compute jobs")->check(CLI::PositiveNumber)->capture_default_str();
  serve_cmd->add_option("--persist", svc.persist_dir, "Directory for write-through session state");
  serve_cmd->add_option("--sync-seconds", svc.sync_seconds, "Wait before answering 202")->capture_default_str();
  serve_cmd->add_option("--session-hours", svc.session_idle_hours, "Idle session lifetime")->capture_default_str();
  serve_cmd->add_option("--cors-origin", svc.cors_origin)->capture_default_str();

  CLI::App* failing = &app;
  auto fail = [&](int code, const std::string& kind, const std::string& message) {
    if (g.json) {
      std::cerr << Json{{"error", {{"code", code}, {"kind", kind}, {"message", message}}}}.dump() << "\n";
    } else {
      std::cerr << "error: " << message << "\n";
      if (code == kUsage) std::cerr << failing->help();
    }
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    for (auto* sub : app.get_subcommands()) failing = sub;
    return fail(kUsage, "usage", e.what());
  }

  try {
    set_thread_count(g.threads);
    seg_params.seed = g.seed;
    style.seed = g.seed;
    const auto started = std::chrono::steady_clock::now();

    // flag checks before any file I/O
    failing = app.get_subcommands().front();
    if ((*link_cmd || *eval_cmd) && !(alpha >= 0.0 && alpha <= 1.0))
      throw UsageError("--alpha must lie between 0 and 1");
    if (*classify_cmd && corpus_dir(corpus).empty())
      throw UsageError("classify needs --corpus or FABSEG_CORPUS");
    if (*eval_cmd && corpus_dir(corpus).empty()) throw UsageError("corpus eval needs --corpus or FABSEG_CORPUS");
    if (*sweep_cmd && inputs.empty() && !starter) throw UsageError("sweep needs --in or --starter");
    if (*sweep_cmd && resolutions.empty()) throw UsageError("--resolutions is empty");
    if (*stylize_cmd && !palette_text.empty()) style.palette = parse_palette(palette_text);

    if (*remesh_cmd) {
      RemeshParams p;
      p.target_resolution = resolution;
      p.seed = g.seed;
      RemeshStats stats;
      const TriangleMesh result = remesh(load_mesh(in), p, &stats);
      write_mesh(result, out);
      info("remeshed " + std::to_string(stats.input_faces) + " -> " + std::to_string(stats.output_faces) + " faces");
      emit({{"input_faces", stats.input_faces},
            {"faces", result.num_faces()},
            {"vertices", result.num_vertices()},
            {"subdivision_rounds", stats.subdivision_rounds},
            {"collapses", stats.collapses}});
    } else if (*segment_cmd) {
      const TriangleMesh mesh = load_mesh(in);
      const SegmentationResult seg = segment(mesh, k, seg_params);
      write_json(out, seg);
      for (const auto& w : seg.warnings) info("warning: " + w);
      info("k = " + std::to_string(seg.k) + " (predicted " + std::to_string(seg.predicted_k) + ")");
      emit({{"k", seg.k}, {"predicted_k", seg.predicted_k}, {"faces", mesh.num_faces()}, {"out", out}});
    } else if (*classify_cmd) {
      const TriangleMesh mesh = load_mesh(in);
      const SegmentationResult seg = read_segmentation(seg_path, mesh);
      const CorpusIndex index = load_index(corpus_dir(corpus));
      ClassificationReport report = classify_external(mesh, seg, index, cls);
      report.mesh_id = fs::path(in).stem().string();
      if (!out.empty()) write_json(out, report);
      for (const auto& s : report.segments)
        info("segment " + std::to_string(s.segment_id) + ": " + std::string(to_string(s.label)) + " (" +
             std::to_string(s.functional_votes) + " functional / " + std::to_string(s.aesthetic_votes) + " aesthetic)");
      emit(report);
    } else if (*link_cmd) {
      const auto comps = read_thing(thing_dir, seg_params);
      Json result;
      const std::string cdir = corpus_dir(corpus);
      if (!cdir.empty()) {
        const CorpusIndex index = load_index(cdir);
        const ThingReport report = classify_thing(comps, index, alpha, cls);
        result = report;
      } else {
        // no corpus: every segment may link
        std::vector<LinkComponent> links;
        for (const auto& c : comps)
          links.push_back({c.mesh_id, prepare_mesh(c.mesh, c.segmentation, ShapeParams{}),
                           std::vector<FunctionalityLabel>(static_cast<std::size_t>(c.segmentation.k),
                                                           FunctionalityLabel::Aesthetic)});
        result = Json{{"linkages", detect_linkages(links, alpha, cls.raw_linkage)}};
      }
      if (!out.empty()) write_json(out, result);
      const Json& pairs = result["linkages"]["pairs"];
      for (const auto& w : result["linkages"]["warnings"]) info("warning: " + w.get<std::string>());
      info(std::to_string(pairs.size()) + " linkage(s) at alpha " + std::to_string(alpha));
      for (const auto& p : pairs)
        info("  " + p["first"]["mesh_id"].get<std::string>() + "/" + p["first"]["segment_id"].dump() + " <-> " +
             p["second"]["mesh_id"].get<std::string>() + "/" + p["second"]["segment_id"].dump() + "  " +
             p["similarity"].dump());
      emit(result);
    } else if (*stylize_cmd) {
      const TriangleMesh mesh = load_mesh(in);
      const SegmentationResult seg = read_segmentation(seg_path, mesh);
      const auto labels = read_labels(labels_path, component.empty() ? fs::path(in).stem().string() : component);
      const VertexMask mask = build_mask(mesh, seg, labels);
      const TriangleMesh styled = apply_style(mesh, mask, style);
      write_mesh(styled, out);
      const Json provenance = style_provenance(style, mesh, mask, styled);
      if (!provenance_path.empty()) write_json(provenance_path, provenance);
      info("held " + std::to_string(mask.masked_count()) + " of " + std::to_string(mesh.num_vertices()) +
           " vertices; wrote " + out);
      emit(provenance);
    } else if (*sweep_cmd) {
      std::vector<std::pair<std::string, TriangleMesh>> models;
      if (starter)
        for (auto& e : starter_corpus()) models.emplace_back(e.thing_id, std::move(e.mesh));
      for (const auto& path : inputs) models.emplace_back(fs::path(path).stem().string(), load_mesh(path));
      RemeshParams rp;
      rp.seed = g.seed;
      Json all = Json::array();
      int stable = 0;
      for (const auto& [name, mesh] : models) {
        const auto sweep = stability_sweep(mesh, resolutions, seg_params, rp);
        const auto res = stabilization_resolution(sweep, min_agreeing);
        stable += res.has_value();
        std::string ks;
        for (const auto& p : sweep) ks += " " + std::to_string(p.predicted_k);
        info(name + ": k =" + ks + "; stable from " + (res ? std::to_string(*res) : std::string("-")));
        all.push_back(sweep_json(name, sweep, res));
      }
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      Json result{{"models", all},
                  {"stabilized", stable},
                  {"total", models.size()},
                  {"fraction", models.empty() ? 0.0 : double(stable) / double(models.size())},
                  {"seconds", seconds}};
      info(std::to_string(stable) + "/" + std::to_string(models.size()) + " models stabilized");
      if (!out.empty()) write_json(out, result);
      emit(result);
    } else if (*synth_cmd) {
      const std::string path = write_starter_corpus(dir);
      info("wrote " + path);
      emit({{"manifest", path}});
    } else if (*ingest_cmd || *index_cmd) {
      IngestOptions opts;
      opts.corpus_resolution = corpus_resolution;
      opts.segment.seed = g.seed;
      opts.remesh.seed = g.seed;
      const IngestResult r = ingest(manifest, opts);
      Json rejected = Json::array();
      for (const auto& rej : r.rejected) {
        rejected.push_back(
            {{"index", rej.index}, {"thing_id", rej.thing_id}, {"reason", rej.reason}, {"detail", rej.detail}});
        info("rejected #" + std::to_string(rej.index) + " " + rej.thing_id + ": " + rej.reason + " (" + rej.detail + ")");
      }
      for (const auto& w : r.warnings) info("warning: " + w);
      Json result{{"accepted", r.entries.size()}, {"rejected", rejected}, {"warnings", r.warnings}};
      info(std::to_string(r.entries.size()) + " entries accepted, " + std::to_string(r.rejected.size()) + " rejected");
      if (*index_cmd) {
        if (r.entries.empty()) throw Error("no valid entries to index");
        shape.seed = g.seed;
        BuildStats stats;
        const CorpusIndex index = build_index(r.entries, shape, dir, &stats);
        result["index"] = {{"meshes", index.meshes.size()},
                           {"segments", index.segment_count()},
                           {"manifest_hash", index.manifest_hash},
                           {"mesh_mrgs_computed", stats.mesh_mrgs_computed},
                           {"segment_mrgs_computed", stats.segment_mrgs_computed},
                           {"cache_hits", stats.cache_hits},
                           {"sidecars_repaired", stats.sidecars_repaired}};
        info("indexed " + std::to_string(index.meshes.size()) + " meshes (" + std::to_string(index.segment_count()) +
             " segments), " + std::to_string(stats.cache_hits) + " cached");
      }
      emit(result);
    } else if (*eval_cmd) {
      const CorpusIndex index = load_index(corpus_dir(corpus));
      const EvaluationReport report = evaluate(index, folds, g.seed, cls, alpha);
      if (!out.empty()) write_json(out, report);
      auto line = [](const char* task, const Metric& m) {
        auto fmt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("undefined"); };
        return std::string(task) + ": precision " + fmt(m.precision) + ", recall " + fmt(m.recall);
      };
      info(line("external", report.external));
      info(line("internal", report.internal));
      for (const auto& w : report.warnings) info("warning: " + w);
      emit(report);
    } else if (*serve_cmd) {
      std::shared_ptr<const CorpusIndex> index;
      const std::string cdir = corpus_dir(corpus);
      if (!cdir.empty()) {
        index = std::make_shared<const CorpusIndex>(load_index(cdir));
      } else {
        info("no corpus given; indexing the starter corpus");
        index = std::make_shared<const CorpusIndex>(build_index(starter_corpus()));
      }
      svc.seed = g.seed;
      Service service(svc, index);
      const int port = service.bind();
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      info("listening on http://" + svc.host + ":" + std::to_string(port));
      emit({{"host", svc.host}, {"port", port}});
      std::cout.flush();
      service.run();
      g_service = nullptr;
    }
    return kOk;
  } catch (const UsageError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const Error& e) {
    return fail(kData, "data", e.what());
  } catch (const Json::exception& e) {
    return fail(kData, "data", std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    return fail(kInternal, "internal", e.what());
  }
}
