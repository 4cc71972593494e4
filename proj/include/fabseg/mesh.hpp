#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fabseg {

using Index = Eigen::Index;
using Vec3 = Eigen::Vector3d;
using VertexMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using FaceMatrix = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
using ColorMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Faces with area below this (mm^2) count as degenerate.
inline constexpr double kDegenerateArea = 1e-12;

/// Indexed triangle mesh. Positions are millimeters, colors RGB in [0,1].
struct TriangleMesh {
  VertexMatrix vertices;
  FaceMatrix faces;
  std::optional<ColorMatrix> vertex_colors;
  std::string name;

  Index num_vertices() const { return vertices.rows(); }
  Index num_faces() const { return faces.rows(); }
  Vec3 vertex(Index v) const { return vertices.row(v).transpose(); }
  Vec3 corner(Index f, int c) const { return vertices.row(faces(f, c)).transpose(); }
};

/// Throws InvalidArgument when an invariant of TriangleMesh does not hold.
void validate(const TriangleMesh& mesh);

Vec3 face_normal(const TriangleMesh& mesh, Index f);  // unit, zero for degenerate faces
double face_area(const TriangleMesh& mesh, Index f);
Vec3 face_centroid(const TriangleMesh& mesh, Index f);
Eigen::VectorXd face_areas(const TriangleMesh& mesh);
double surface_area(const TriangleMesh& mesh);
double bounding_box_diagonal(const TriangleMesh& mesh);
/// Area-weighted vertex normals, unit length (zero for isolated vertices).
VertexMatrix vertex_normals(const TriangleMesh& mesh);

struct EdgeRecord {
  int v0 = 0;  // v0 < v1
  int v1 = 0;
  std::vector<int> faces;
};

/// Face adjacency derived from shared undirected edges.
struct MeshTopology {
  std::vector<std::vector<int>> face_adjacency;
  std::vector<EdgeRecord> edges;  // sorted by (v0, v1)
  std::vector<int> boundary_edges;
  std::vector<int> non_manifold_edges;

  bool is_manifold() const { return non_manifold_edges.empty(); }
  bool is_closed() const { return boundary_edges.empty(); }
  /// Index into edges, or -1.
  int find_edge(int a, int b) const;
};

MeshTopology build_topology(const TriangleMesh& mesh);

/// Per-face component id over edge-connectivity; ids ordered by lowest face.
std::vector<int> face_components(const MeshTopology& topology, int* component_count = nullptr);

/// Standalone mesh built from the listed faces, vertices re-indexed in
/// ascending original order. Colors are carried over when present.
TriangleMesh submesh(const TriangleMesh& mesh, const std::vector<int>& faces,
                     std::vector<int>* vertex_map = nullptr);

std::vector<TriangleMesh> connected_components(const TriangleMesh& mesh);
std::vector<std::vector<int>> connected_component_faces(const TriangleMesh& mesh,
                                                        const MeshTopology& topology);

/// Drops vertices not referenced by any face.
TriangleMesh compact(const TriangleMesh& mesh);

/// Concatenates meshes into one (colors dropped unless every part has them).
TriangleMesh merge(const std::vector<TriangleMesh>& parts, const std::string& name = {});

// ---------------------------------------------------------------------------
// File formats

struct ParseStats {
  long dropped_degenerate_faces = 0;
  long welded_vertices = 0;
  bool binary = false;
};

TriangleMesh parse_obj(std::string_view text, ParseStats* stats = nullptr);
TriangleMesh parse_stl(std::string_view bytes, ParseStats* stats = nullptr);
/// Picks the parser from the file extension, falling back to content sniffing.
TriangleMesh parse_mesh(std::string_view bytes, std::string_view filename_hint = {},
                        ParseStats* stats = nullptr);

/// OBJ text with `digits` significant digits; colors as extended "v x y z r g b" records.
std::string write_obj(const TriangleMesh& mesh, int digits = 9);
/// Binary STL.
std::string write_stl(const TriangleMesh& mesh);

TriangleMesh load_mesh(const std::string& path, ParseStats* stats = nullptr);
void save_mesh(const TriangleMesh& mesh, const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// FNV-1a 64-bit.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace fabseg
