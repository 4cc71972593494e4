#include "fabseg/service.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <thread>

#include "fabseg/classify.hpp"
#include "fabseg/error.hpp"
#include "fabseg/json_io.hpp"
#include "fabseg/remesh.hpp"
#include "fabseg/stylize.hpp"

// after Eigen: resolv.h defines a _res macro
#include <httplib.h>

namespace fs = std::filesystem;

namespace fabseg {

namespace {

using Clock = std::chrono::steady_clock;

struct HttpError {
  int status;
  std::string message;
};

[[noreturn]] void fail(int status, const std::string& message) { throw HttpError{status, message}; }

std::string now_iso() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string incident_id() {
  static std::mutex m;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard<std::mutex> lock(m);
  return hex64(rng());
}

Json error_body(int status, const std::string& message, const std::string& incident = {}) {
  Json e{{"status", status}, {"message", message}};
  if (!incident.empty()) e["incident_id"] = incident;
  return Json{{"error", e}};
}

/// Runs fn and maps library failures to HTTP statuses.
std::pair<int, Json> guarded(const std::function<std::pair<int, Json>()>& fn) {
  try {
    return fn();
  } catch (const HttpError& e) {
    return {e.status, error_body(e.status, e.message)};
  } catch (const Error& e) {
    return {422, error_body(422, e.what())};
  } catch (const Json::exception& e) {
    return {422, error_body(422, std::string("invalid JSON field: ") + e.what())};
  } catch (const std::exception& e) {
    const std::string id = incident_id();
    std::cerr << "incident " << id << ": " << e.what() << "\n";
    return {500, error_body(500, "internal error", id)};
  }
}

struct MeshRecord {
  std::string id;
  std::string source;
  std::shared_ptr<const TriangleMesh> mesh;
  std::shared_ptr<const SegmentationResult> segmentation;
  std::string segmentation_id;
  int version = 0;
  std::map<std::string, std::pair<std::string, std::shared_ptr<const SegmentationResult>>> segment_cache;
  std::mutex op;  // queues mutating requests on this mesh
};

struct ThingRecord {
  std::string id;
  std::vector<std::string> mesh_ids;
  std::optional<ThingReport> report;
  std::vector<std::string> classified_segmentations;  // segmentation ids the report was built on
  std::map<std::pair<std::string, int>, FunctionalityLabel> overrides;
  double alpha = 0.86;
  std::uint64_t classified_at = 0;
  std::mutex op;
};

struct Session {
  std::string id;
  std::string created_at;
  Clock::time_point last_access = Clock::now();
  std::map<std::string, std::shared_ptr<MeshRecord>> meshes;
  std::map<std::string, std::shared_ptr<ThingRecord>> things;
};

struct Job {
  std::string id;
  std::string session;
  std::mutex m;
  std::condition_variable cv;
  bool done = false;
  int status = 0;
  Json body;
};

class WorkerPool {
 public:
  explicit WorkerPool(int n) {
    for (int i = 0; i < std::max(1, n); ++i)
      threads_.emplace_back([this] {
        for (;;) {
          std::function<void()> task;
          {
            std::unique_lock<std::mutex> lock(m_);
            cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
            if (stop_ && queue_.empty()) return;
            task = std::move(queue_.front());
            queue_.pop_front();
          }
          task();
        }
      });
  }
  ~WorkerPool() {
    {
      std::lock_guard<std::mutex> lock(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }
  void submit(std::function<void()> task) {
    {
      std::lock_guard<std::mutex> lock(m_);
      queue_.push_back(std::move(task));
    }
    cv_.notify_one();
  }

 private:
  std::vector<std::thread> threads_;
  std::deque<std::function<void()>> queue_;
  std::mutex m_;
  std::condition_variable cv_;
  bool stop_ = false;
};

Json body_json(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  Json j = parse_json(req.body);
  if (!j.is_object()) fail(422, "request body must be a JSON object");
  return j;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  std::shared_ptr<const CorpusIndex> corpus;
  httplib::Server server;
  std::mutex state;  // guards sessions, records and jobs; never held during compute
  std::map<std::string, Session> sessions;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::uint64_t next_id = 1;
  std::uint64_t classify_counter = 0;
  std::unique_ptr<WorkerPool> pool;

  Impl(ServiceOptions o, std::shared_ptr<const CorpusIndex> c) : options(std::move(o)), corpus(std::move(c)) {
    pool = std::make_unique<WorkerPool>(options.workers);
    if (!options.persist_dir.empty()) load_persisted();
    routes();
  }

  std::string fresh_id(char prefix) { return std::string(1, prefix) + std::to_string(next_id++); }

  // --- state helpers; call with `state` held ---

  Session& session_for(const httplib::Request& req) {
    std::string id = req.get_header_value("X-Session-Id");
    if (id.empty()) id = "default";
    if (id.size() > 64 || !std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'; }))
      fail(422, "X-Session-Id may only contain letters, digits, '-' and '_'");
    expire_sessions();
    auto [it, inserted] = sessions.try_emplace(id);
    if (inserted) {
      it->second.id = id;
      it->second.created_at = now_iso();
    }
    it->second.last_access = Clock::now();
    return it->second;
  }

  void expire_sessions() {
    const auto ttl = std::chrono::duration<double, std::ratio<3600>>(options.session_idle_hours);
    for (auto it = sessions.begin(); it != sessions.end();) {
      if (Clock::now() - it->second.last_access > ttl) it = sessions.erase(it);
      else ++it;
    }
  }

  std::shared_ptr<MeshRecord> mesh_in(Session& s, const std::string& id) {
    auto it = s.meshes.find(id);
    if (it == s.meshes.end()) fail(404, "unknown mesh '" + id + "'");
    return it->second;
  }

  std::shared_ptr<ThingRecord> thing_in(Session& s, const std::string& id) {
    auto it = s.things.find(id);
    if (it == s.things.end()) fail(404, "unknown thing '" + id + "'");
    return it->second;
  }

  bool stale(Session& s, const ThingRecord& t) {
    if (!t.report) return true;
    for (std::size_t i = 0; i < t.mesh_ids.size(); ++i) {
      auto it = s.meshes.find(t.mesh_ids[i]);
      if (it == s.meshes.end() || it->second->segmentation_id != t.classified_segmentations[i]) return true;
    }
    return false;
  }

  std::vector<std::vector<FunctionalityLabel>> effective_labels(const ThingRecord& t) {
    std::vector<std::vector<FunctionalityLabel>> labels = t.report ? t.report->labels : std::vector<std::vector<FunctionalityLabel>>{};
    for (const auto& [key, label] : t.overrides)
      for (std::size_t c = 0; c < t.mesh_ids.size() && c < labels.size(); ++c)
        if (t.mesh_ids[c] == key.first && key.second < static_cast<int>(labels[c].size())) labels[c][key.second] = label;
    return labels;
  }

  Json thing_json(Session& s, const ThingRecord& t) {
    Json overrides = Json::array();
    for (const auto& [key, label] : t.overrides)
      overrides.push_back({{"mesh_id", key.first}, {"segment_id", key.second}, {"label", to_string(label)}});
    Json effective = Json::array();
    for (const auto& per_mesh : effective_labels(t)) effective.push_back(labels_to_json(per_mesh));
    return Json{{"thing_id", t.id},
                {"mesh_ids", t.mesh_ids},
                {"alpha", t.alpha},
                {"classified", t.report.has_value()},
                {"stale", t.report && stale(s, t)},
                {"report", t.report ? Json(*t.report) : Json(nullptr)},
                {"overrides", overrides},
                {"effective_labels", effective}};
  }

  Json mesh_json(const MeshRecord& m) {
    return Json{{"mesh_id", m.id},
                {"source", m.source},
                {"faces", m.mesh->num_faces()},
                {"vertices", m.mesh->num_vertices()},
                {"segmented", m.segmentation != nullptr},
                {"segmentation_id", m.segmentation ? Json(m.segmentation_id) : Json(nullptr)}};
  }

  Json segmentation_json(const MeshRecord& m) {
    Json j = *m.segmentation;
    j["mesh_id"] = m.id;
    j["segmentation_id"] = m.segmentation_id;
    return j;
  }

  // --- persistence ---

  void persist(const Session& s) {
    if (options.persist_dir.empty()) return;
    const fs::path dir = fs::path(options.persist_dir) / s.id;
    fs::create_directories(dir / "meshes");
    Json meshes = Json::array();
    for (const auto& [id, m] : s.meshes) {
      const std::string file = "meshes/" + id + ".obj";
      if (!fs::exists(dir / file) || m->version > 0) write_file((dir / file).string(), write_obj(*m->mesh, 17));
      Json mj{{"id", id}, {"file", file}, {"source", m->source}, {"version", m->version}};
      if (m->segmentation) {
        mj["segmentation"] = *m->segmentation;
        mj["segmentation_id"] = m->segmentation_id;
      }
      meshes.push_back(mj);
    }
    Json things = Json::array();
    for (const auto& [id, t] : s.things) {
      Json overrides = Json::array();
      for (const auto& [key, label] : t->overrides)
        overrides.push_back({{"mesh_id", key.first}, {"segment_id", key.second}, {"label", to_string(label)}});
      Json tj{{"id", id}, {"mesh_ids", t->mesh_ids}, {"alpha", t->alpha}, {"overrides", overrides},
              {"classified_segmentations", t->classified_segmentations}, {"classified_at", t->classified_at}};
      if (t->report) tj["report"] = *t->report;
      things.push_back(tj);
    }
    Json state{{"session_id", s.id}, {"created_at", s.created_at}, {"meshes", meshes}, {"things", things}};
    write_file((dir / "state.json").string(), state.dump(1));
  }

  void load_persisted() {
    const fs::path root = options.persist_dir;
    if (!fs::is_directory(root)) return;
    std::uint64_t max_id = 0;
    auto track = [&](const std::string& id) {
      if (id.size() > 1) max_id = std::max<std::uint64_t>(max_id, std::strtoull(id.c_str() + 1, nullptr, 10));
    };
    for (const auto& entry : fs::directory_iterator(root)) {
      if (!fs::is_regular_file(entry.path() / "state.json")) continue;
      try {
        const Json state = parse_json(read_file((entry.path() / "state.json").string()));
        Session s;
        s.id = state.at("session_id").get<std::string>();
        s.created_at = state.value("created_at", now_iso());
        for (const auto& mj : state.at("meshes")) {
          auto m = std::make_shared<MeshRecord>();
          m->id = mj.at("id").get<std::string>();
          m->source = mj.value("source", "upload");
          m->version = mj.value("version", 0);
          m->mesh = std::make_shared<const TriangleMesh>(load_mesh((entry.path() / mj.at("file").get<std::string>()).string()));
          if (mj.contains("segmentation")) {
            m->segmentation = std::make_shared<const SegmentationResult>(mj["segmentation"].get<SegmentationResult>());
            m->segmentation_id = mj.at("segmentation_id").get<std::string>();
            track(m->segmentation_id);
          }
          track(m->id);
          s.meshes[m->id] = m;
        }
        for (const auto& tj : state.at("things")) {
          auto t = std::make_shared<ThingRecord>();
          t->id = tj.at("id").get<std::string>();
          t->mesh_ids = tj.at("mesh_ids").get<std::vector<std::string>>();
          t->alpha = tj.value("alpha", 0.86);
          t->classified_segmentations = tj.value("classified_segmentations", std::vector<std::string>{});
          t->classified_at = tj.value("classified_at", std::uint64_t{0});
          classify_counter = std::max(classify_counter, t->classified_at);
          for (const auto& o : tj.at("overrides"))
            t->overrides[{o.at("mesh_id").get<std::string>(), o.at("segment_id").get<int>()}] =
                parse_label(o.at("label").get<std::string>());
          if (tj.contains("report")) t->report = tj["report"].get<ThingReport>();
          track(t->id);
          s.things[t->id] = t;
        }
        sessions[s.id] = std::move(s);
      } catch (const std::exception& e) {
        std::cerr << "skipping persisted session " << entry.path() << ": " << e.what() << "\n";
      }
    }
    next_id = max_id + 1;
  }

  // --- jobs ---

  /// Runs work on the pool; answers inline when it finishes within the sync
  /// window, otherwise 202 with a job id to poll.
  std::pair<int, Json> run_job(const std::string& session, std::function<std::pair<int, Json>()> work) {
    auto job = std::make_shared<Job>();
    {
      std::lock_guard<std::mutex> lock(state);
      job->id = fresh_id('j');
      job->session = session;
      jobs[job->id] = job;
    }
    pool->submit([job, work = std::move(work)] {
      auto [status, body] = guarded(work);
      std::lock_guard<std::mutex> lock(job->m);
      job->status = status;
      job->body = std::move(body);
      job->done = true;
      job->cv.notify_all();
    });
    std::unique_lock<std::mutex> lock(job->m);
    if (job->cv.wait_for(lock, std::chrono::duration<double>(options.sync_seconds), [&] { return job->done; }))
      return {job->status, job->body};
    return {202, Json{{"job_id", job->id}, {"status", "running"}, {"poll", "/jobs/" + job->id}}};
  }

  // --- handlers ---

  std::pair<int, Json> upload(const httplib::Request& req) {
    if (req.body.empty()) fail(422, "empty mesh payload");
    std::string hint = req.has_param("name") ? req.get_param_value("name") : "";
    TriangleMesh mesh = parse_mesh(req.body, hint);
    if (mesh.num_faces() == 0) fail(422, "mesh has no faces");
    std::lock_guard<std::mutex> lock(state);
    Session& s = session_for(req);
    auto m = std::make_shared<MeshRecord>();
    m->id = fresh_id('m');
    m->source = "upload";
    m->mesh = std::make_shared<const TriangleMesh>(std::move(mesh));
    s.meshes[m->id] = m;
    persist(s);
    return {201, mesh_json(*m)};
  }

  void invalidate_cache_locked(MeshRecord& m) {
    ++m.version;
    m.segmentation.reset();
    m.segmentation_id.clear();
    m.segment_cache.clear();
  }

  std::pair<int, Json> process(const httplib::Request& req, const std::string& id) {
    const Json body = body_json(req);
    RemeshParams params;
    params.target_resolution = body.value("target_resolution", options.default_resolution);
    params.seed = body.value("seed", options.seed);
    std::string session_id;
    std::shared_ptr<MeshRecord> m;
    {
      std::lock_guard<std::mutex> lock(state);
      Session& s = session_for(req);
      session_id = s.id;
      m = mesh_in(s, id);
    }
    return run_job(session_id, [this, m, params, session_id] {
      std::lock_guard<std::mutex> op(m->op);
      std::shared_ptr<const TriangleMesh> before;
      {
        std::lock_guard<std::mutex> lock(state);
        before = m->mesh;
      }
      RemeshStats stats;
      auto after = std::make_shared<const TriangleMesh>(remesh(*before, params, &stats));
      std::lock_guard<std::mutex> lock(state);
      m->mesh = after;
      invalidate_cache_locked(*m);
      if (auto it = sessions.find(session_id); it != sessions.end()) persist(it->second);
      Json j = mesh_json(*m);
      j["input_faces"] = stats.input_faces;
      j["subdivision_rounds"] = stats.subdivision_rounds;
      j["collapses"] = stats.collapses;
      return std::pair<int, Json>{200, j};
    });
  }

  std::pair<int, Json> segment_mesh(const httplib::Request& req, const std::string& id) {
    const Json body = body_json(req);
    SegmentParams params;
    params.seed = body.value("seed", options.seed);
    params.delta = body.value("delta", params.delta);
    params.eta_convex = body.value("eta_convex", params.eta_convex);
    params.window = body.value("window", params.window);
    std::optional<int> k;
    if (body.contains("k") && !body["k"].is_null()) k = body["k"].get<int>();
    const std::string key = Json{{"k", k ? Json(*k) : Json(nullptr)}, {"seed", params.seed}, {"delta", params.delta},
                                 {"eta_convex", params.eta_convex}, {"window", params.window}}
                                .dump();
    std::string session_id;
    std::shared_ptr<MeshRecord> m;
    {
      std::lock_guard<std::mutex> lock(state);
      Session& s = session_for(req);
      session_id = s.id;
      m = mesh_in(s, id);
      if (auto hit = m->segment_cache.find(key); hit != m->segment_cache.end()) {
        m->segmentation_id = hit->second.first;
        m->segmentation = hit->second.second;
        return {200, segmentation_json(*m)};
      }
    }
    return run_job(session_id, [this, m, params, k, key, session_id] {
      std::lock_guard<std::mutex> op(m->op);
      std::shared_ptr<const TriangleMesh> mesh;
      int version;
      {
        std::lock_guard<std::mutex> lock(state);
        if (auto hit = m->segment_cache.find(key); hit != m->segment_cache.end()) {
          m->segmentation_id = hit->second.first;
          m->segmentation = hit->second.second;
          return std::pair<int, Json>{200, segmentation_json(*m)};
        }
        mesh = m->mesh;
        version = m->version;
      }
      auto result = std::make_shared<const SegmentationResult>(segment(*mesh, k, params));
      std::lock_guard<std::mutex> lock(state);
      if (m->version != version) fail(409, "mesh changed while segmenting; retry");
      m->segmentation = result;
      m->segmentation_id = fresh_id('s');
      m->segment_cache[key] = {m->segmentation_id, result};
      if (auto it = sessions.find(session_id); it != sessions.end()) persist(it->second);
      return std::pair<int, Json>{200, segmentation_json(*m)};
    });
  }

  std::pair<int, Json> create_thing(const httplib::Request& req) {
    const Json body = body_json(req);
    if (!body.contains("mesh_ids") || !body["mesh_ids"].is_array() || body["mesh_ids"].empty())
      fail(422, "mesh_ids must be a nonempty array");
    auto ids = body["mesh_ids"].get<std::vector<std::string>>();
    std::lock_guard<std::mutex> lock(state);
    Session& s = session_for(req);
    std::set<std::string> unique;
    for (const auto& id : ids) {
      mesh_in(s, id);
      if (!unique.insert(id).second) fail(422, "mesh '" + id + "' listed twice");
    }
    auto t = std::make_shared<ThingRecord>();
    t->id = fresh_id('t');
    t->mesh_ids = ids;
    s.things[t->id] = t;
    persist(s);
    return {201, thing_json(s, *t)};
  }

  std::pair<int, Json> classify(const httplib::Request& req, const std::string& id) {
    const Json body = body_json(req);
    const double alpha = body.value("alpha", 0.86);
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail(422, "alpha must lie in [0, 1]");
    if (!corpus || corpus->meshes.empty()) fail(409, "no corpus index is loaded");
    std::string session_id;
    std::shared_ptr<ThingRecord> t;
    std::vector<ThingComponent> comps;
    std::vector<std::string> seg_ids;
    {
      std::lock_guard<std::mutex> lock(state);
      Session& s = session_for(req);
      session_id = s.id;
      t = thing_in(s, id);
      for (const auto& mid : t->mesh_ids) {
        auto m = mesh_in(s, mid);
        if (!m->segmentation) fail(409, "mesh '" + mid + "' must be segmented before classification");
        comps.push_back({mid, *m->mesh, *m->segmentation});
        seg_ids.push_back(m->segmentation_id);
      }
    }
    return run_job(session_id, [this, t, comps = std::move(comps), seg_ids, alpha, session_id] {
      std::lock_guard<std::mutex> op(t->op);
      ThingReport report = classify_thing(comps, *corpus, alpha);
      std::lock_guard<std::mutex> lock(state);
      auto it = sessions.find(session_id);
      if (it == sessions.end()) fail(404, "session expired");
      if (t->classified_segmentations != seg_ids) t->overrides.clear();
      t->report = std::move(report);
      t->classified_segmentations = seg_ids;
      t->alpha = alpha;
      t->classified_at = ++classify_counter;
      persist(it->second);
      return std::pair<int, Json>{200, thing_json(it->second, *t)};
    });
  }

  std::pair<int, Json> override_label(const httplib::Request& req, const std::string& thing, const std::string& mesh,
                                      const std::string& seg) {
    const Json body = body_json(req);
    if (!body.contains("label") || !body["label"].is_string()) fail(422, "body needs a label");
    const FunctionalityLabel label = parse_label(body["label"].get<std::string>());
    int segment_id = 0;
    try {
      segment_id = std::stoi(seg);
    } catch (const std::exception&) {
      fail(404, "unknown segment '" + seg + "'");
    }
    std::lock_guard<std::mutex> lock(state);
    Session& s = session_for(req);
    auto t = thing_in(s, thing);
    if (std::find(t->mesh_ids.begin(), t->mesh_ids.end(), mesh) == t->mesh_ids.end())
      fail(404, "mesh '" + mesh + "' is not part of thing '" + thing + "'");
    auto m = mesh_in(s, mesh);
    if (!m->segmentation) fail(409, "mesh '" + mesh + "' has no segmentation");
    if (segment_id < 0 || segment_id >= m->segmentation->k) fail(404, "unknown segment " + seg);
    t->overrides[{mesh, segment_id}] = label;
    persist(s);
    return {200, thing_json(s, *t)};
  }

  std::pair<int, Json> separate(const httplib::Request& req, const std::string& thing, const std::string& index) {
    std::lock_guard<std::mutex> lock(state);
    Session& s = session_for(req);
    auto t = thing_in(s, thing);
    if (!t->report) fail(409, "thing has not been classified");
    std::size_t n = 0;
    try {
      n = std::stoul(index);
    } catch (const std::exception&) {
      fail(404, "unknown linkage '" + index + "'");
    }
    auto& pairs = t->report->linkages.pairs;
    if (n >= pairs.size()) fail(404, "unknown linkage " + index);
    pairs.erase(pairs.begin() + static_cast<std::ptrdiff_t>(n));
    t->report->labels = combine_labels(t->mesh_ids, t->report->components, t->report->linkages);
    persist(s);
    return {200, thing_json(s, *t)};
  }

  std::pair<int, Json> stylize(const httplib::Request& req, const std::string& id) {
    const Json body = body_json(req);
    StyleSpec spec = body.get<StyleSpec>();
    if (!body.contains("seed")) spec.seed = options.seed;
    std::string session_id;
    std::shared_ptr<MeshRecord> m;
    std::shared_ptr<const TriangleMesh> mesh;
    std::shared_ptr<const SegmentationResult> seg;
    std::vector<FunctionalityLabel> labels;
    {
      std::lock_guard<std::mutex> lock(state);
      Session& s = session_for(req);
      session_id = s.id;
      m = mesh_in(s, id);
      const ThingRecord* best = nullptr;
      std::size_t position = 0;
      for (const auto& [tid, t] : s.things) {
        if (!t->report || stale(s, *t)) continue;
        for (std::size_t c = 0; c < t->mesh_ids.size(); ++c)
          if (t->mesh_ids[c] == id && (!best || t->classified_at > best->classified_at)) {
            best = t.get();
            position = c;
          }
      }
      if (!best) fail(409, "mesh '" + id + "' must be classified (as part of a thing) before stylizing");
      labels = effective_labels(*best)[position];
      mesh = m->mesh;
      seg = m->segmentation;
    }
    return run_job(session_id, [this, m, mesh, seg, labels, spec, session_id, id] {
      std::lock_guard<std::mutex> op(m->op);
      const VertexMask mask = build_mask(*mesh, *seg, labels);
      auto styled = std::make_shared<const TriangleMesh>(apply_style(*mesh, mask, spec));
      const Json provenance = style_provenance(spec, *mesh, mask, *styled);
      std::lock_guard<std::mutex> lock(state);
      auto it = sessions.find(session_id);
      if (it == sessions.end()) fail(404, "session expired");
      auto out = std::make_shared<MeshRecord>();
      out->id = fresh_id('m');
      out->source = "stylized:" + id;
      out->mesh = styled;
      out->segmentation = seg;
      out->segmentation_id = fresh_id('s');
      it->second.meshes[out->id] = out;
      persist(it->second);
      Json j = mesh_json(*out);
      j["source_mesh_id"] = id;
      j["masked_vertices"] = mask.masked_count();
      j["labels"] = labels_to_json(labels);
      j["provenance"] = provenance;
      return std::pair<int, Json>{201, j};
    });
  }

  std::pair<int, Json> job_status(const httplib::Request& req, const std::string& id) {
    std::shared_ptr<Job> job;
    {
      std::lock_guard<std::mutex> lock(state);
      Session& s = session_for(req);
      auto it = jobs.find(id);
      if (it == jobs.end() || it->second->session != s.id) fail(404, "unknown job '" + id + "'");
      job = it->second;
    }
    std::lock_guard<std::mutex> lock(job->m);
    if (!job->done) return {200, Json{{"job_id", id}, {"status", "running"}}};
    return {200, Json{{"job_id", id},
                      {"status", job->status < 400 ? "done" : "failed"},
                      {"http_status", job->status},
                      {"result", job->body}}};
  }

  // --- routing ---

  void reply(httplib::Response& res, const std::pair<int, Json>& out) {
    res.status = out.first;
    res.set_content(out.second.dump(), "application/json");
  }

  template <typename F>
  httplib::Server::Handler json_route(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      reply(res, guarded([&] { return f(req); }));
    };
  }

  void routes() {
    server.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", options.cors_origin);
      res.set_header("Access-Control-Expose-Headers", "X-Session-Id");
    });
    server.Options(R"(.*)", [this](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      res.set_header("Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Session-Id");
      res.set_header("Access-Control-Max-Age", "86400");
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
      const std::string id = incident_id();
      std::cerr << "incident " << id << ": unhandled exception\n";
      res.status = 500;
      res.set_content(error_body(500, "internal error", id).dump(), "application/json");
    });

    server.Get("/health", json_route([this](const httplib::Request&) {
      return std::pair<int, Json>{200, Json{{"status", "ok"}, {"corpus_meshes", corpus ? corpus->meshes.size() : 0}}};
    }));
    server.Post("/meshes", json_route([this](const httplib::Request& r) { return upload(r); }));
    server.Get(R"(/meshes/([A-Za-z0-9_-]+)\.obj)", [this](const httplib::Request& req, httplib::Response& res) {
      std::string text;
      auto out = guarded([&] {
        std::lock_guard<std::mutex> lock(state);
        Session& s = session_for(req);
        text = write_obj(*mesh_in(s, req.matches[1])->mesh, 17);
        return std::pair<int, Json>{200, Json()};
      });
      if (out.first != 200) return reply(res, out);
      res.set_content(text, "model/obj");
    });
    server.Get(R"(/meshes/([A-Za-z0-9_-]+))", json_route([this](const httplib::Request& r) {
      std::lock_guard<std::mutex> lock(state);
      return std::pair<int, Json>{200, mesh_json(*mesh_in(session_for(r), r.matches[1]))};
    }));
    server.Get(R"(/meshes/([A-Za-z0-9_-]+)/segmentation)", json_route([this](const httplib::Request& r) {
      std::lock_guard<std::mutex> lock(state);
      auto m = mesh_in(session_for(r), r.matches[1]);
      if (!m->segmentation) fail(404, "mesh has not been segmented");
      return std::pair<int, Json>{200, segmentation_json(*m)};
    }));
    server.Post(R"(/meshes/([A-Za-z0-9_-]+)/process)",
                json_route([this](const httplib::Request& r) { return process(r, r.matches[1]); }));
    server.Post(R"(/meshes/([A-Za-z0-9_-]+)/segment)",
                json_route([this](const httplib::Request& r) { return segment_mesh(r, r.matches[1]); }));
    server.Post(R"(/meshes/([A-Za-z0-9_-]+)/stylize)",
                json_route([this](const httplib::Request& r) { return stylize(r, r.matches[1]); }));
    server.Post("/things", json_route([this](const httplib::Request& r) { return create_thing(r); }));
    server.Post(R"(/things/([A-Za-z0-9_-]+)/classify)",
                json_route([this](const httplib::Request& r) { return classify(r, r.matches[1]); }));
    server.Get(R"(/things/([A-Za-z0-9_-]+)/report)", json_route([this](const httplib::Request& r) {
      std::lock_guard<std::mutex> lock(state);
      Session& s = session_for(r);
      return std::pair<int, Json>{200, thing_json(s, *thing_in(s, r.matches[1]))};
    }));
    server.Patch(R"(/things/([A-Za-z0-9_-]+)/segments/([A-Za-z0-9_-]+)/([^/]+))",
                 json_route([this](const httplib::Request& r) {
                   return override_label(r, r.matches[1], r.matches[2], r.matches[3]);
                 }));
    server.Delete(R"(/things/([A-Za-z0-9_-]+)/linkages/([^/]+))",
                  json_route([this](const httplib::Request& r) { return separate(r, r.matches[1], r.matches[2]); }));
    server.Get(R"(/jobs/([A-Za-z0-9_-]+))",
               json_route([this](const httplib::Request& r) { return job_status(r, r.matches[1]); }));
  }
};

Service::Service(ServiceOptions options, std::shared_ptr<const CorpusIndex> corpus)
    : impl_(std::make_unique<Impl>(std::move(options), std::move(corpus))) {}

Service::~Service() { stop(); }

int Service::bind() {
  if (impl_->options.port == 0) return impl_->server.bind_to_any_port(impl_->options.host);
  if (!impl_->server.bind_to_port(impl_->options.host, impl_->options.port))
    throw Error("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  return impl_->options.port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace fabseg
