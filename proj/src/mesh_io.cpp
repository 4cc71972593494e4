#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "fabseg/error.hpp"
#include "fabseg/mesh.hpp"

namespace fabseg {

namespace {

constexpr double kWeldTolerance = 1e-6;

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool to_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool to_int(std::string_view s, long& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    fn(line, line_no);
    if (end == text.size()) break;
    pos = end + 1;
  }
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * (b - a).cross(c - a).norm(); }

/// Builds a mesh from raw triangles, dropping repeated-index and zero-area faces.
TriangleMesh assemble(std::vector<Vec3> positions, std::vector<std::array<int, 3>> tris,
                      std::vector<Vec3> colors, ParseStats* stats) {
  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<Index>(positions.size()), 3);
  for (std::size_t i = 0; i < positions.size(); ++i) mesh.vertices.row(static_cast<Index>(i)) = positions[i];
  if (!colors.empty() && colors.size() == positions.size()) {
    ColorMatrix c(static_cast<Index>(colors.size()), 3);
    for (std::size_t i = 0; i < colors.size(); ++i) c.row(static_cast<Index>(i)) = colors[i];
    mesh.vertex_colors = std::move(c);
  }
  std::vector<std::array<int, 3>> kept;
  kept.reserve(tris.size());
  long dropped = 0;
  for (const auto& t : tris) {
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2] ||
        triangle_area(positions[t[0]], positions[t[1]], positions[t[2]]) < kDegenerateArea) {
      ++dropped;
      continue;
    }
    kept.push_back(t);
  }
  mesh.faces.resize(static_cast<Index>(kept.size()), 3);
  for (std::size_t i = 0; i < kept.size(); ++i)
    for (int c = 0; c < 3; ++c) mesh.faces(static_cast<Index>(i), c) = kept[i][c];
  if (stats) stats->dropped_degenerate_faces = dropped;
  if (mesh.num_faces() == 0) throw ParseError("mesh has no faces", 0);
  return mesh;
}

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};
struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

/// Welds STL corners closer than kWeldTolerance, first occurrence wins.
TriangleMesh weld(const std::vector<Vec3>& corners, ParseStats* stats) {
  std::unordered_map<CellKey, std::vector<int>, CellHash> grid;
  std::vector<Vec3> unique;
  std::vector<int> index(corners.size());
  const double tol2 = kWeldTolerance * kWeldTolerance;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    const Vec3& p = corners[i];
    const CellKey key{static_cast<std::int64_t>(std::floor(p.x() / kWeldTolerance)),
                      static_cast<std::int64_t>(std::floor(p.y() / kWeldTolerance)),
                      static_cast<std::int64_t>(std::floor(p.z() / kWeldTolerance))};
    int found = -1;
    for (int dx = -1; dx <= 1 && found < 0; ++dx)
      for (int dy = -1; dy <= 1 && found < 0; ++dy)
        for (int dz = -1; dz <= 1 && found < 0; ++dz) {
          auto it = grid.find({key.x + dx, key.y + dy, key.z + dz});
          if (it == grid.end()) continue;
          for (int cand : it->second)
            if ((unique[cand] - p).squaredNorm() <= tol2) {
              if (found < 0 || cand < found) found = cand;
            }
        }
    if (found < 0) {
      found = static_cast<int>(unique.size());
      unique.push_back(p);
      grid[key].push_back(found);
    }
    index[i] = found;
  }
  std::vector<std::array<int, 3>> tris(corners.size() / 3);
  for (std::size_t t = 0; t < tris.size(); ++t) tris[t] = {index[3 * t], index[3 * t + 1], index[3 * t + 2]};
  if (stats) stats->welded_vertices = static_cast<long>(corners.size() - unique.size());
  return assemble(std::move(unique), std::move(tris), {}, stats);
}

bool starts_with_solid(std::string_view bytes) {
  std::size_t i = 0;
  while (i < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[i]))) ++i;
  return bytes.substr(i, 5) == "solid";
}

std::uint32_t read_u32(const char* p) {
  const auto* b = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float read_f32(const char* p) {
  const std::uint32_t bits = read_u32(p);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

TriangleMesh parse_stl_binary(std::string_view bytes, ParseStats* stats) {
  if (bytes.size() < 84) throw ParseError("binary STL shorter than its 84-byte header", 0);
  const std::uint32_t count = read_u32(bytes.data() + 80);
  if (count == 0) throw ParseError("STL declares zero triangles", 0);
  const std::uint64_t needed = 84ULL + 50ULL * count;
  if (bytes.size() < needed)
    throw ParseError("truncated binary STL: header declares " + std::to_string(count) + " triangles, body holds " +
                         std::to_string((bytes.size() - 84) / 50),
                     0);
  std::vector<Vec3> corners;
  corners.reserve(3ULL * count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const char* rec = bytes.data() + 84 + 50ULL * t;
    for (int c = 0; c < 3; ++c) {
      const char* p = rec + 12 + 12 * c;
      corners.emplace_back(read_f32(p), read_f32(p + 4), read_f32(p + 8));
      if (!corners.back().allFinite()) throw ParseError("non-finite coordinate in triangle " + std::to_string(t), 0);
    }
  }
  if (stats) stats->binary = true;
  return weld(corners, stats);
}

TriangleMesh parse_stl_ascii(std::string_view text, ParseStats* stats) {
  std::vector<Vec3> corners;
  for_each_line(text, [&](std::string_view line, int line_no) {
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] != "vertex") return;
    Vec3 p;
    if (tok.size() != 4 || !to_double(tok[1], p.x()) || !to_double(tok[2], p.y()) || !to_double(tok[3], p.z()))
      throw ParseError("malformed vertex record", line_no);
    corners.push_back(p);
  });
  if (corners.empty()) throw ParseError("STL contains zero triangles", 0);
  if (corners.size() % 3 != 0) throw ParseError("STL facet with a vertex count other than 3", 0);
  if (stats) stats->binary = false;
  return weld(corners, stats);
}

}  // namespace

TriangleMesh parse_obj(std::string_view text, ParseStats* stats) {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  bool all_colored = true;
  std::vector<std::array<int, 3>> tris;
  std::vector<int> tri_lines;
  std::vector<std::pair<long, int>> pending;  // (raw index, line) awaiting bound check
  std::string name;

  for_each_line(text, [&](std::string_view line, int line_no) {
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split_ws(line);
    if (tok.empty()) return;
    if (tok[0] == "o" && name.empty() && tok.size() > 1) {
      name = std::string(tok[1]);
    } else if (tok[0] == "v") {
      Vec3 p;
      if (tok.size() < 4 || !to_double(tok[1], p.x()) || !to_double(tok[2], p.y()) || !to_double(tok[3], p.z()))
        throw ParseError("malformed vertex record", line_no);
      positions.push_back(p);
      Vec3 c;
      if (tok.size() >= 7 && to_double(tok[4], c.x()) && to_double(tok[5], c.y()) && to_double(tok[6], c.z())) {
        colors.push_back(c.cwiseMax(0.0).cwiseMin(1.0));
      } else {
        all_colored = false;
      }
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw ParseError("face with fewer than 3 vertices", line_no);
      std::vector<int> idx;
      idx.reserve(tok.size() - 1);
      for (std::size_t i = 1; i < tok.size(); ++i) {
        std::string_view ref = tok[i].substr(0, tok[i].find('/'));
        long raw = 0;
        if (!to_int(ref, raw) || raw == 0) throw ParseError("malformed face index '" + std::string(tok[i]) + "'", line_no);
        const long resolved = raw > 0 ? raw - 1 : static_cast<long>(positions.size()) + raw;
        if (resolved < 0) throw ParseError("face index " + std::to_string(raw) + " out of range", line_no);
        idx.push_back(static_cast<int>(resolved));
        pending.emplace_back(resolved, line_no);
      }
      for (std::size_t i = 1; i + 1 < idx.size(); ++i) {
        tris.push_back({idx[0], idx[i], idx[i + 1]});
        tri_lines.push_back(line_no);
      }
    }
  });
  for (const auto& [resolved, line_no] : pending)
    if (resolved >= static_cast<long>(positions.size()))
      throw ParseError("face index " + std::to_string(resolved + 1) + " exceeds vertex count " +
                           std::to_string(positions.size()),
                       line_no);
  if (positions.empty() || tris.empty()) throw ParseError("empty mesh", 0);
  if (!all_colored) colors.clear();
  TriangleMesh mesh = assemble(std::move(positions), std::move(tris), std::move(colors), stats);
  mesh.name = std::move(name);
  return mesh;
}

TriangleMesh parse_stl(std::string_view bytes, ParseStats* stats) {
  if (starts_with_solid(bytes)) {
    // Some binary exporters also start the header with "solid".
    if (bytes.size() >= 84) {
      const std::uint64_t count = read_u32(bytes.data() + 80);
      if (count > 0 && bytes.size() == 84 + 50 * count) return parse_stl_binary(bytes, stats);
    }
    if (bytes.find("facet") != std::string_view::npos || bytes.find("endsolid") != std::string_view::npos)
      return parse_stl_ascii(bytes, stats);
  }
  return parse_stl_binary(bytes, stats);
}

TriangleMesh parse_mesh(std::string_view bytes, std::string_view filename_hint, ParseStats* stats) {
  std::string ext;
  if (auto dot = filename_hint.rfind('.'); dot != std::string_view::npos) {
    for (char c : filename_hint.substr(dot + 1)) ext.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (ext == "stl") return parse_stl(bytes, stats);
  if (ext == "obj") return parse_obj(bytes, stats);
  if (starts_with_solid(bytes) || bytes.find('\0') != std::string_view::npos) return parse_stl(bytes, stats);
  return parse_obj(bytes, stats);
}

std::string write_obj(const TriangleMesh& mesh, int digits) {
  std::string out;
  out.reserve(static_cast<std::size_t>(mesh.num_vertices() * 40 + mesh.num_faces() * 24));
  char buf[256];
  if (!mesh.name.empty()) out += "o " + mesh.name + "\n";
  for (Index v = 0; v < mesh.num_vertices(); ++v) {
    int n;
    if (mesh.vertex_colors) {
      const auto& c = *mesh.vertex_colors;
      n = std::snprintf(buf, sizeof buf, "v %.*g %.*g %.*g %.*g %.*g %.*g\n", digits, mesh.vertices(v, 0), digits,
                        mesh.vertices(v, 1), digits, mesh.vertices(v, 2), digits, c(v, 0), digits, c(v, 1), digits,
                        c(v, 2));
    } else {
      n = std::snprintf(buf, sizeof buf, "v %.*g %.*g %.*g\n", digits, mesh.vertices(v, 0), digits, mesh.vertices(v, 1),
                        digits, mesh.vertices(v, 2));
    }
    out.append(buf, static_cast<std::size_t>(n));
  }
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const int n = std::snprintf(buf, sizeof buf, "f %d %d %d\n", mesh.faces(f, 0) + 1, mesh.faces(f, 1) + 1,
                                mesh.faces(f, 2) + 1);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

std::string write_stl(const TriangleMesh& mesh) {
  std::string out(80, '\0');
  const std::string header = "binary STL " + mesh.name;
  std::copy_n(header.begin(), std::min<std::size_t>(header.size(), 80), out.begin());
  put_u32(out, static_cast<std::uint32_t>(mesh.num_faces()));
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 n = face_normal(mesh, f);
    for (int i = 0; i < 3; ++i) put_f32(out, static_cast<float>(n[i]));
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 3; ++i) put_f32(out, static_cast<float>(mesh.vertices(mesh.faces(f, c), i)));
    out.push_back('\0');
    out.push_back('\0');
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

TriangleMesh load_mesh(const std::string& path, ParseStats* stats) {
  TriangleMesh mesh = parse_mesh(read_file(path), path, stats);
  if (mesh.name.empty()) {
    std::string base = path.substr(path.find_last_of("/\\") + 1);
    mesh.name = base.substr(0, base.rfind('.'));
  }
  return mesh;
}

void save_mesh(const TriangleMesh& mesh, const std::string& path) {
  const bool stl = path.size() >= 4 && (path.substr(path.size() - 4) == ".stl" || path.substr(path.size() - 4) == ".STL");
  write_file(path, stl ? write_stl(mesh) : write_obj(mesh));
}

}  // namespace fabseg
