#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "fabseg/error.hpp"
#include "fabseg/mesh.hpp"
#include "fabseg/remesh.hpp"
#include "fabseg/spatial.hpp"
#include "fabseg/synth.hpp"

using namespace fabseg;

namespace {

std::string binary_stl(const TriangleMesh& m, std::uint32_t declared) {
  std::string out(80, ' ');
  out.replace(0, 6, "binary");
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((declared >> (8 * i)) & 0xff));
  for (Index f = 0; f < m.num_faces(); ++f) {
    float rec[12] = {0, 0, 0};
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) rec[3 + 3 * c + k] = static_cast<float>(m.corner(f, c)[k]);
    out.append(reinterpret_cast<const char*>(rec), sizeof rec);
    out.append(2, '\0');
  }
  return out;
}

double one_sided_distance(const TriangleMesh& from, const TriangleMesh& to) {
  TriangleTree tree(to);
  double worst = 0.0;
  for (Index v = 0; v < from.num_vertices(); ++v) worst = std::max(worst, tree.closest(from.vertex(v)).distance);
  return worst;
}

TriangleMesh fine_uv_sphere() {
  std::vector<Eigen::Vector2d> profile;
  const int rows = 157;
  for (int i = 0; i <= rows; ++i) {
    const double phi = std::numbers::pi * i / rows;
    profile.emplace_back(std::sin(phi), -std::cos(phi));
  }
  profile.front().x() = 0.0;
  profile.back().x() = 0.0;
  return make_revolved(profile, 160);
}

}  // namespace

TEST_CASE("parse_obj basics") {
  auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  CHECK(m.num_faces() == 1);
  CHECK(m.num_vertices() == 3);

  auto quad = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  REQUIRE(quad.num_faces() == 2);
  CHECK(quad.faces.row(0) == Eigen::RowVector3i(0, 1, 2));
  CHECK(quad.faces.row(1) == Eigen::RowVector3i(0, 2, 3));

  try {
    parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  CHECK_THROWS_AS(parse_obj("# nothing\n"), ParseError);
  CHECK_THROWS_AS(parse_obj("v 0 0 zero\n"), ParseError);
}

TEST_CASE("parse_obj ignores normals, texcoords and slash references") {
  auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2/1/1 -1/1/1\n");
  CHECK(m.num_faces() == 1);
  CHECK(m.faces(0, 2) == 2);
}

TEST_CASE("parse_stl binary and ascii") {
  const auto cube = make_box(Vec3(1, 1, 1));
  ParseStats stats;
  auto m = parse_stl(binary_stl(cube, 12), &stats);
  CHECK(stats.binary);
  CHECK(m.num_faces() == 12);
  CHECK(m.num_vertices() == 8);

  auto single = parse_stl(
      "solid t\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\nendloop\nendfacet\n"
      "endsolid t\n");
  CHECK(single.num_faces() == 1);
  CHECK(single.num_vertices() == 3);

  std::string truncated = binary_stl(make_icosphere(1), 100);
  truncated.resize(84 + 50 * 50);
  CHECK_THROWS(parse_stl(truncated));
  CHECK_THROWS(parse_stl(binary_stl(TriangleMesh{}, 0)));
}

TEST_CASE("build_topology examples") {
  auto tri = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  auto t1 = build_topology(tri);
  CHECK(t1.face_adjacency[0].empty());
  CHECK(t1.boundary_edges.size() == 3);

  auto two = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 4 3\n");
  auto t2 = build_topology(two);
  CHECK(t2.face_adjacency[0] == std::vector<int>{1});
  CHECK(t2.face_adjacency[1] == std::vector<int>{0});

  auto t3 = build_topology(make_box(Vec3(1, 1, 1)));
  for (const auto& adj : t3.face_adjacency) CHECK(adj.size() == 3);
  CHECK(t3.boundary_edges.empty());
  CHECK(t3.is_manifold());
}

TEST_CASE("non-manifold edges are flagged, not fatal") {
  auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\nf 1 2 3\nf 2 1 4\nf 1 2 5\n");
  auto t = build_topology(m);
  CHECK_FALSE(t.is_manifold());
  CHECK(t.face_adjacency[0].size() == 2);
}

TEST_CASE("symmetric adjacency on fuzzed meshes") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const int nv = 6 + static_cast<int>(rng() % 10);
    TriangleMesh m;
    m.vertices = VertexMatrix::Random(nv, 3);
    std::vector<Eigen::RowVector3i> faces;
    for (int f = 0; f < 3 * nv; ++f) {
      int a = static_cast<int>(rng() % nv), b = static_cast<int>(rng() % nv), c = static_cast<int>(rng() % nv);
      if (a == b || b == c || a == c) continue;
      faces.emplace_back(a, b, c);
    }
    m.faces.resize(static_cast<Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) m.faces.row(static_cast<Index>(i)) = faces[i];
    auto t = build_topology(m);
    for (std::size_t i = 0; i < t.face_adjacency.size(); ++i)
      for (int j : t.face_adjacency[i]) {
        const auto& back = t.face_adjacency[j];
        CHECK(std::find(back.begin(), back.end(), static_cast<int>(i)) != back.end());
      }
  }
}

TEST_CASE("connected_components examples") {
  auto a = make_box(Vec3(1, 1, 1));
  auto b = make_box(Vec3(1, 1, 1), Vec3(5, 0, 0));
  auto parts = connected_components(merge({a, b}));
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].num_faces() == 12);
  CHECK(parts[1].num_faces() == 12);

  CHECK(connected_components(make_icosphere(2)).size() == 1);

  auto tri = parse_obj("v 9 9 9\nv 10 9 9\nv 9 10 9\nf 1 2 3\n");
  auto mixed = connected_components(merge({a, tri}));
  REQUIRE(mixed.size() == 2);
  std::vector<Index> sizes = {mixed[0].num_faces(), mixed[1].num_faces()};
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<Index>{1, 12});
}

TEST_CASE("obj write/parse round trip") {
  auto m = transformed(make_icosphere(2, 3.7), Eigen::Affine3d(Eigen::Translation3d(0.1, -2.0, 1e-3)));
  auto again = parse_obj(write_obj(m));
  CHECK(again.faces == m.faces);
  auto twice = parse_obj(write_obj(again));
  CHECK(twice.vertices == again.vertices);
  CHECK((again.vertices - m.vertices).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("remesh cube to 5000") {
  RemeshParams p;
  p.target_resolution = 5000;
  auto cube = make_box(Vec3(10, 10, 10));
  auto out = remesh(cube, p);
  CHECK(out.num_faces() >= 4900);
  CHECK(out.num_faces() <= 5100);
  auto topo = build_topology(out);
  CHECK(topo.is_closed());
  CHECK(connected_components(out).size() == 1);
  const double diag = bounding_box_diagonal(cube);
  CHECK(one_sided_distance(out, cube) <= 0.005 * diag);
  CHECK(one_sided_distance(cube, out) <= 0.005 * diag);
  CHECK(remesh(cube, p).vertices == out.vertices);
}

TEST_CASE("remesh 50k sphere to 25k stays on the sphere") {
  auto sphere = fine_uv_sphere();
  REQUIRE(std::abs(sphere.num_faces() - 50000) < 500);
  RemeshParams p;
  p.target_resolution = 25000;
  auto out = remesh(sphere, p);
  CHECK(out.num_faces() >= 24500);
  CHECK(out.num_faces() <= 25500);
  double worst = 0.0;
  for (Index v = 0; v < out.num_vertices(); ++v) worst = std::max(worst, std::abs(out.vertex(v).norm() - 1.0));
  CHECK(worst <= 0.005);
  CHECK(build_topology(out).is_closed());
}

TEST_CASE("remesh open strip by repeated subdivision") {
  auto strip = make_strip();
  RemeshParams p;
  p.target_resolution = 25000;
  RemeshStats stats;
  auto out = remesh(strip, p, &stats);
  const int rounds = static_cast<int>(std::ceil(std::log(25000.0 / 3.0) / std::log(4.0)));
  CHECK(stats.subdivision_rounds == rounds);
  CHECK(out.num_faces() >= 24500);
  CHECK(out.num_faces() <= 25500);
  auto topo = build_topology(out);
  CHECK_FALSE(topo.boundary_edges.empty());
  // boundary still traces the original outline
  for (int e : topo.boundary_edges) {
    const auto& rec = topo.edges[e];
    const Vec3 p0 = out.vertex(rec.v0);
    const bool on_rim = std::abs(p0.y()) < 1e-9 || std::abs(p0.x()) < 1e-9 || std::abs(p0.y() - 1.0) < 1e-9 ||
                        std::abs(p0.x() + p0.y() - 2.0) < 1e-9;
    CHECK(on_rim);
  }
}

TEST_CASE("remesh preconditions and count idempotence") {
  RemeshParams bad;
  bad.target_resolution = 3;
  CHECK_THROWS_AS(remesh(make_box(Vec3(1, 1, 1)), bad), InvalidArgument);
  bad.target_resolution = 100;
  bad.tolerance_fraction = 0.5;
  CHECK_THROWS_AS(remesh(make_box(Vec3(1, 1, 1)), bad), InvalidArgument);

  RemeshParams p;
  p.target_resolution = 2000;
  auto once = remesh(make_icosphere(3), p);
  auto twice = remesh(once, p);
  CHECK(std::abs(twice.num_faces() - once.num_faces()) <= 0.02 * 2000);
}

TEST_CASE("remesh preserves component count") {
  RemeshParams p;
  p.target_resolution = 3000;
  auto two = merge({make_icosphere(2), make_icosphere(2, 1.0, Vec3(4, 0, 0))});
  auto out = remesh(two, p);
  CHECK(connected_components(out).size() == 2);
  CHECK(build_topology(out).is_closed());
}
