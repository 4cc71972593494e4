#include "fabseg/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <set>

#include "fabseg/error.hpp"
#include "fabseg/json_io.hpp"
#include "fabseg/parallel.hpp"

namespace fs = std::filesystem;

namespace fabseg {

namespace {

struct Rejected {
  std::string reason;
  std::string detail;
};

bool file_safe_id(const std::string& id) {
  if (id.empty() || id.size() > 128 || id[0] == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

std::string required_string(const Json& entry, const char* key) {
  if (!entry.contains(key) || !entry[key].is_string()) throw Rejected{"invalid_field", std::string("missing string field '") + key + "'"};
  return entry[key].get<std::string>();
}

CorpusEntry read_entry(const Json& j, const std::string& base_dir, const IngestOptions& options) {
  if (!j.is_object()) throw Rejected{"invalid_field", "entry is not an object"};
  CorpusEntry e;
  e.thing_id = required_string(j, "thing_id");
  if (!file_safe_id(e.thing_id))
    throw Rejected{"invalid_field", "thing_id may only contain letters, digits, '_', '-' and '.'"};
  e.mesh_path = required_string(j, "mesh");
  try {
    e.category = parse_category(required_string(j, "category"));
    e.composition = parse_composition(required_string(j, "composition"));
  } catch (const InvalidArgument& err) {
    throw Rejected{"invalid_field", err.what()};
  }
  if (j.contains("component_of")) {
    if (!j["component_of"].is_string()) throw Rejected{"invalid_field", "component_of must be a string"};
    e.component_of = j["component_of"].get<std::string>();
  }
  if (!j.contains("labels") || !j["labels"].is_array()) throw Rejected{"invalid_field", "missing labels array"};
  try {
    e.labels = labels_from_json(j["labels"]);
  } catch (const InvalidArgument& err) {
    throw Rejected{"unknown_label", err.what()};
  }

  fs::path path = e.mesh_path;
  if (path.is_relative() && !base_dir.empty()) path = fs::path(base_dir) / path;
  if (!fs::is_regular_file(path)) throw Rejected{"missing_file", "mesh file not found: " + path.string()};
  try {
    e.mesh = load_mesh(path.string());
  } catch (const Error& err) {
    throw Rejected{"parse_error", err.what()};
  }
  if (e.mesh.num_faces() == 0) throw Rejected{"parse_error", "mesh has no faces"};

  if (j.contains("segmentation") && !j["segmentation"].is_null()) {
    try {
      e.segmentation = j["segmentation"].get<SegmentationResult>();
    } catch (const Error& err) {
      throw Rejected{"segmentation_mismatch", err.what()};
    } catch (const Json::exception& err) {
      throw Rejected{"segmentation_mismatch", err.what()};
    }
    if (static_cast<Index>(e.segmentation.face_labels.size()) != e.mesh.num_faces())
      throw Rejected{"segmentation_mismatch", std::to_string(e.segmentation.face_labels.size()) +
                                                  " face labels for a mesh with " +
                                                  std::to_string(e.mesh.num_faces()) + " faces"};
  } else {
    if (e.labels.empty()) throw Rejected{"invalid_field", "labels are empty, cannot choose k"};
    if (options.corpus_resolution > 0 && e.mesh.num_faces() != options.corpus_resolution) {
      RemeshParams rp = options.remesh;
      rp.target_resolution = options.corpus_resolution;
      e.mesh = remesh(e.mesh, rp);
    }
    e.segmentation = segment(e.mesh, static_cast<int>(e.labels.size()), options.segment);
  }
  if (static_cast<int>(e.labels.size()) != e.segmentation.k)
    throw Rejected{"label_count_mismatch", "label-count mismatch: " + std::to_string(e.labels.size()) +
                                               " labels for k=" + std::to_string(e.segmentation.k)};
  return e;
}

std::string sidecar_name(const std::string& id, int segment = -1) {
  return segment < 0 ? id + ".mrg1" : id + ".s" + std::to_string(segment) + ".mrg1";
}

template <typename T>
void hash_bytes(std::uint64_t& h, const T* data, std::size_t count) {
  h = fnv1a(std::string_view(reinterpret_cast<const char*>(data), count * sizeof(T)), h);
}

Json index_manifest(const CorpusIndex& index) {
  Json meshes = Json::array();
  for (const auto& m : index.meshes) {
    Json segments = Json::array();
    for (const auto& s : m.segments)
      segments.push_back({{"segment_id", s.segment_id},
                          {"label", to_string(s.label)},
                          {"face_count", s.face_count},
                          {"disconnected", s.disconnected}});
    meshes.push_back({{"thing_id", m.thing_id},
                      {"group", m.group},
                      {"mesh", m.mesh_path},
                      {"category", to_string(m.category)},
                      {"composition", to_string(m.composition)},
                      {"hash", m.hash},
                      {"segmentation", m.segmentation},
                      {"segments", segments}});
  }
  return Json{{"version", index.version}, {"shape", index.shape}, {"manifest_hash", index.manifest_hash},
              {"meshes", meshes}};
}

}  // namespace

IngestResult ingest_manifest(const std::string& manifest_text, const std::string& base_dir,
                             const IngestOptions& options) {
  const Json manifest = parse_json(manifest_text);
  if (!manifest.is_array()) throw Error("manifest must be a JSON array of entries");
  IngestResult result;
  if (manifest.empty()) result.warnings.push_back("empty manifest: the corpus has no entries and classification will fail");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    std::string id;
    if (manifest[i].is_object() && manifest[i].contains("thing_id") && manifest[i]["thing_id"].is_string())
      id = manifest[i]["thing_id"].get<std::string>();
    try {
      if (!id.empty() && seen.count(id)) throw Rejected{"duplicate_id", "thing_id '" + id + "' appears twice"};
      CorpusEntry e = read_entry(manifest[i], base_dir, options);
      seen.insert(e.thing_id);
      result.entries.push_back(std::move(e));
    } catch (const Rejected& r) {
      result.rejected.push_back({i, id, r.reason, r.detail});
    } catch (const Error& err) {
      result.rejected.push_back({i, id, "invalid_field", err.what()});
    } catch (const Json::exception& err) {
      result.rejected.push_back({i, id, "invalid_field", err.what()});
    }
  }
  return result;
}

IngestResult ingest(const std::string& manifest_path, const IngestOptions& options) {
  return ingest_manifest(read_file(manifest_path), fs::path(manifest_path).parent_path().string(), options);
}

std::size_t CorpusIndex::segment_count() const {
  std::size_t n = 0;
  for (const auto& m : meshes) n += m.segments.size();
  return n;
}

const IndexedMesh* CorpusIndex::find(const std::string& thing_id) const {
  for (const auto& m : meshes)
    if (m.thing_id == thing_id) return &m;
  return nullptr;
}

std::string entry_hash(const CorpusEntry& entry, const ShapeParams& shape) {
  std::uint64_t h = fnv1a(Json(shape).dump());
  hash_bytes(h, entry.mesh.vertices.data(), static_cast<std::size_t>(entry.mesh.vertices.size()));
  hash_bytes(h, entry.mesh.faces.data(), static_cast<std::size_t>(entry.mesh.faces.size()));
  hash_bytes(h, entry.segmentation.face_labels.data(), entry.segmentation.face_labels.size());
  return hex64(h);
}

CorpusIndex build_index(const std::vector<CorpusEntry>& entries, const ShapeParams& shape,
                        const std::string& directory, BuildStats* stats) {
  if (entries.empty()) throw InvalidArgument("cannot index an empty corpus");
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (!file_safe_id(e.thing_id)) throw InvalidArgument("thing_id '" + e.thing_id + "' is not file-safe");
    if (!ids.insert(e.thing_id).second) throw InvalidArgument("duplicate thing_id '" + e.thing_id + "'");
    if (static_cast<int>(e.labels.size()) != e.segmentation.k)
      throw InvalidArgument("entry '" + e.thing_id + "': label-count mismatch");
  }

  Json old_hashes = Json::object();
  const fs::path dir = directory;
  if (!directory.empty()) {
    fs::create_directories(dir / "mrg");
    if (fs::is_regular_file(dir / "hashes.json")) {
      try {
        old_hashes = parse_json(read_file((dir / "hashes.json").string()));
      } catch (const Error&) {
        old_hashes = Json::object();
      }
      if (!old_hashes.is_object()) old_hashes = Json::object();
    }
  }

  CorpusIndex index;
  index.shape = shape;
  index.meshes.resize(entries.size());
  std::atomic<int> mesh_count{0}, segment_count{0}, hits{0}, repaired{0};

  parallel_for(entries.size(), [&](std::size_t i) {
    const CorpusEntry& e = entries[i];
    IndexedMesh& m = index.meshes[i];
    m.thing_id = e.thing_id;
    m.group = e.group();
    m.mesh_path = e.mesh_path;
    m.category = e.category;
    m.composition = e.composition;
    m.segmentation = e.segmentation;
    m.hash = entry_hash(e, shape);
    m.segments.resize(static_cast<std::size_t>(e.segmentation.k));
    for (int s = 0; s < e.segmentation.k; ++s) {
      m.segments[s].segment_id = s;
      m.segments[s].label = e.labels[s];
      m.segments[s].face_count = static_cast<int>(e.segmentation.segments[s].size());
    }

    const bool cached = !directory.empty() && old_hashes.contains(e.thing_id) &&
                        old_hashes[e.thing_id].is_string() && old_hashes[e.thing_id].get<std::string>() == m.hash;
    if (cached) {
      try {
        m.mrg = deserialize_mrg(read_file((dir / "mrg" / sidecar_name(e.thing_id)).string()));
        for (int s = 0; s < e.segmentation.k; ++s) {
          m.segments[s].mrg = deserialize_mrg(read_file((dir / "mrg" / sidecar_name(e.thing_id, s)).string()));
          m.segments[s].disconnected = segment_submesh(e.mesh, e.segmentation, s).disconnected;
        }
        ++hits;
        return;
      } catch (const Error&) {
        ++repaired;
      }
    }

    m.mrg = shape_signature(e.mesh, shape);
    ++mesh_count;
    for (int s = 0; s < e.segmentation.k; ++s) {
      const SegmentMesh part = segment_submesh(e.mesh, e.segmentation, s);
      m.segments[s].disconnected = part.disconnected;
      m.segments[s].mrg = shape_signature(part.mesh, shape);
      ++segment_count;
    }
    if (!directory.empty()) {
      write_file((dir / "mrg" / sidecar_name(e.thing_id)).string(), serialize_mrg(m.mrg));
      for (int s = 0; s < e.segmentation.k; ++s)
        write_file((dir / "mrg" / sidecar_name(e.thing_id, s)).string(), serialize_mrg(m.segments[s].mrg));
    }
  });

  std::uint64_t h = fnv1a(Json(shape).dump());
  for (const auto& m : index.meshes) h = fnv1a(m.thing_id + ":" + m.hash + ";", h);
  index.manifest_hash = hex64(h);

  if (!directory.empty()) {
    Json hashes = Json::object();
    for (const auto& m : index.meshes) hashes[m.thing_id] = m.hash;
    write_file((dir / "hashes.json").string(), hashes.dump(1) + "\n");
    write_file((dir / "manifest.json").string(), index_manifest(index).dump(1) + "\n");
  }
  if (stats) {
    stats->mesh_mrgs_computed = mesh_count;
    stats->segment_mrgs_computed = segment_count;
    stats->cache_hits = hits;
    stats->sidecars_repaired = repaired;
  }
  return index;
}

CorpusIndex load_index(const std::string& directory) {
  const fs::path dir = directory;
  if (!fs::is_regular_file(dir / "manifest.json")) throw Error("no corpus index at " + directory);
  const Json j = parse_json(read_file((dir / "manifest.json").string()));
  CorpusIndex index;
  try {
    index.version = j.at("version").get<int>();
    if (index.version != 1) throw Error("unsupported corpus index version " + std::to_string(index.version));
    index.shape = j.at("shape").get<ShapeParams>();
    index.manifest_hash = j.at("manifest_hash").get<std::string>();
    for (const auto& mj : j.at("meshes")) {
      IndexedMesh m;
      m.thing_id = mj.at("thing_id").get<std::string>();
      if (!file_safe_id(m.thing_id)) throw Error("index entry has an unsafe thing_id");
      m.group = mj.at("group").get<std::string>();
      m.mesh_path = mj.at("mesh").get<std::string>();
      m.category = parse_category(mj.at("category").get<std::string>());
      m.composition = parse_composition(mj.at("composition").get<std::string>());
      m.hash = mj.at("hash").get<std::string>();
      m.segmentation = mj.at("segmentation").get<SegmentationResult>();
      m.mrg = deserialize_mrg(read_file((dir / "mrg" / sidecar_name(m.thing_id)).string()));
      for (const auto& sj : mj.at("segments")) {
        IndexedSegment s;
        s.segment_id = sj.at("segment_id").get<int>();
        s.label = parse_label(sj.at("label").get<std::string>());
        s.face_count = sj.at("face_count").get<int>();
        s.disconnected = sj.at("disconnected").get<bool>();
        s.mrg = deserialize_mrg(read_file((dir / "mrg" / sidecar_name(m.thing_id, s.segment_id)).string()));
        m.segments.push_back(std::move(s));
      }
      if (static_cast<int>(m.segments.size()) != m.segmentation.k)
        throw Error("index entry '" + m.thing_id + "' has " + std::to_string(m.segments.size()) +
                    " segments for k=" + std::to_string(m.segmentation.k));
      index.meshes.push_back(std::move(m));
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed corpus index: ") + e.what());
  }
  return index;
}

std::vector<MeshMatch> query_similar_meshes(const MRG& query, const CorpusIndex& index, int top_n,
                                            const MeshFilter& allowed) {
  if (index.meshes.empty()) throw InvalidArgument("corpus index is empty");
  if (top_n < 1) throw InvalidArgument("top_n must be at least 1");
  std::vector<MeshMatch> all;
  for (std::size_t i = 0; i < index.meshes.size(); ++i) {
    if (allowed && !allowed(index.meshes[i])) continue;
    all.push_back({i, index.meshes[i].thing_id, mrg_similarity(query, index.meshes[i].mrg, index.shape.weight).value});
  }
  std::sort(all.begin(), all.end(), [](const MeshMatch& a, const MeshMatch& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.thing_id < b.thing_id;
  });
  if (all.size() > static_cast<std::size_t>(top_n)) all.resize(static_cast<std::size_t>(top_n));
  return all;
}

std::vector<MeshMatch> query_similar_meshes(const TriangleMesh& mesh, const CorpusIndex& index, int top_n) {
  if (index.meshes.empty()) throw InvalidArgument("corpus index is empty");
  return query_similar_meshes(shape_signature(mesh, index.shape), index, top_n);
}

void Metric::finish() {
  precision.reset();
  recall.reset();
  if (true_positive + false_positive > 0)
    precision = static_cast<double>(true_positive) / static_cast<double>(true_positive + false_positive);
  if (true_positive + false_negative > 0)
    recall = static_cast<double>(true_positive) / static_cast<double>(true_positive + false_negative);
}

}  // namespace fabseg
