#include <doctest.h>

#include <Eigen/Dense>
#include <bit>
#include <map>
#include <numeric>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "fabseg/error.hpp"
#include "fabseg/kmeans.hpp"
#include "fabseg/spectral.hpp"
#include "fabseg/synth.hpp"

using namespace fabseg;

namespace {

SparseMatrix sparse_from(const Eigen::MatrixXd& dense) { return dense.sparseView(); }

// dense L built by hand from W, for oracle comparisons
Eigen::MatrixXd dense_normalized_laplacian(const Eigen::MatrixXd& W) {
  const Eigen::VectorXd d = W.rowwise().sum();
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(W.rows(), W.cols());
  for (Index i = 0; i < W.rows(); ++i)
    for (Index j = 0; j < W.cols(); ++j) L(i, j) -= W(i, j) / std::sqrt(d[i] * d[j]);
  return L;
}

TriangleMesh sphere_with_faces(int segments, int rows) {
  std::vector<Eigen::Vector2d> profile;
  for (int i = 0; i <= rows; ++i) {
    const double phi = std::numbers::pi * i / rows;
    profile.emplace_back(std::sin(phi), -std::cos(phi));
  }
  profile.front().x() = 0.0;
  profile.back().x() = 0.0;
  return make_revolved(profile, segments);
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [it, fresh] = ab.emplace(a[i], b[i]);
    if (!fresh && it->second != b[i]) return false;
    auto [jt, fresh2] = ba.emplace(b[i], a[i]);
    if (!fresh2 && jt->second != a[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("dual graph: coplanar pair has no angular term") {
  auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 4 3\n");
  auto g = build_dual_graph(m, build_topology(m), 0.5, 0.1);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].angular == doctest::Approx(0.0));
  // Geod / avg(Geod) = 1 for a single edge
  CHECK(g.edges[0].weight == doctest::Approx(std::exp(-0.5)));
  const Vec3 c0(1.0 / 3, 1.0 / 3, 0), c1(2.0 / 3, 2.0 / 3, 0), mid(0.5, 0.5, 0);
  CHECK(g.edges[0].geodesic == doctest::Approx((c0 - mid).norm() + (mid - c1).norm()));
}

TEST_CASE("dual graph: concave right-angle fold") {
  auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 1 3 4\n");
  auto g1 = build_dual_graph(m, build_topology(m), 0.5, 1.0);
  REQUIRE(g1.edges.size() == 1);
  CHECK(g1.edges[0].angular == doctest::Approx(1.0));
  auto g2 = build_dual_graph(m, build_topology(m), 0.5, 0.1);
  CHECK(g2.edges[0].angular == doctest::Approx(1.0));

  // the same fold turned outward is convex and gets eta
  auto convex = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 -1\nf 1 2 3\nf 1 3 4\n");
  auto g3 = build_dual_graph(convex, build_topology(convex), 0.5, 0.1);
  CHECK(g3.edges[0].angular == doctest::Approx(0.1));
}

TEST_CASE("dual graph: flat fan has equal weights") {
  auto fan = make_fan(4);
  auto g = build_dual_graph(fan, build_topology(fan), 0.5, 0.1);
  REQUIRE(g.edges.size() == 4);
  for (const auto& e : g.edges) CHECK(e.weight == doctest::Approx(g.edges[0].weight).epsilon(1e-12));
  CHECK((Eigen::MatrixXd(g.affinity) - Eigen::MatrixXd(g.affinity).transpose()).norm() == 0.0);
}

TEST_CASE("dual graph parameters") {
  auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 4 3\n");
  // no angular variation and no geodesic weight: every affinity is exp(0)
  auto g = build_dual_graph(m, build_topology(m), 0.0, 0.1);
  CHECK(g.edges[0].weight == 1.0);
  CHECK_THROWS_AS(build_dual_graph(m, build_topology(m), 1.5, 0.1), InvalidArgument);
  CHECK_THROWS_AS(build_dual_graph(m, build_topology(m), 0.5, 0.0), InvalidArgument);
}

TEST_CASE("normalized laplacian examples") {
  for (double w : {0.01, 0.5, 1.0}) {
    Eigen::MatrixXd W(2, 2);
    W << 0, w, w, 0;
    Eigen::VectorXd d = W.rowwise().sum();
    Eigen::MatrixXd L = Eigen::MatrixXd(normalized_laplacian<double>(sparse_from(W), d));
    Eigen::MatrixXd expected(2, 2);
    expected << 1, -1, -1, 1;
    CHECK((L - expected).norm() < 1e-12);
  }

  Eigen::MatrixXd K3 = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
  auto L = normalized_laplacian<double>(sparse_from(K3), K3.rowwise().sum());
  auto spec = eigendecompose(L, 3, 0);
  CHECK(spec.eigenvalues[0] == doctest::Approx(0.0));
  CHECK(spec.eigenvalues[1] == doctest::Approx(1.5));
  CHECK(spec.eigenvalues[2] == doctest::Approx(1.5));

  Eigen::MatrixXd iso = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(normalized_laplacian<double>(sparse_from(iso), iso.rowwise().sum()), InvalidArgument);
}

TEST_CASE("null space of the normalized laplacian is sqrt(D)") {
  auto m = make_icosphere(2);
  auto g = build_dual_graph(m, build_topology(m));
  auto spec = eigendecompose(normalized_laplacian(g), 4, 1);
  CHECK(std::abs(spec.eigenvalues[0]) < 1e-9);
  Eigen::VectorXd expect = g.degree.cwiseSqrt().normalized();
  CHECK(std::abs(std::abs(spec.eigenvectors.col(0).dot(expect)) - 1.0) < 1e-8);
}

TEST_CASE("eigendecompose: single node and path graph") {
  SparseMatrix zero(1, 1);
  auto one = eigendecompose(zero, 1, 0);
  REQUIRE(one.eigenvalues.size() == 1);
  CHECK(one.eigenvalues[0] == doctest::Approx(0.0));

  Eigen::MatrixXd W(3, 3);
  W << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  const Eigen::MatrixXd Ld = dense_normalized_laplacian(W);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(Ld);
  for (auto method : {EigenMethod::Dense, EigenMethod::Iterative}) {
    EigenOptions opts;
    opts.method = method;
    opts.lanczos.block_size = 1;
    auto spec = eigendecompose(sparse_from(Ld), 3, 5, opts);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(spec.eigenvalues[i] - oracle.eigenvalues()[i]) <= 1e-6);
  }
  // analytic: 1 - cos(pi j / 2)
  CHECK(oracle.eigenvalues()[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(oracle.eigenvalues()[1] == doctest::Approx(1.0));
  CHECK(oracle.eigenvalues()[2] == doctest::Approx(2.0));
}

TEST_CASE("iterative and dense spectra agree on a 500-face sphere") {
  auto m = sphere_with_faces(25, 11);
  REQUIRE(m.num_faces() == 500);
  auto L = normalized_laplacian(build_dual_graph(m, build_topology(m)));
  EigenOptions dense, iter;
  dense.method = EigenMethod::Dense;
  iter.method = EigenMethod::Iterative;
  auto a = eigendecompose(L, 64, 3, dense);
  auto b = eigendecompose(L, 64, 3, iter);
  CHECK((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(b.max_residual <= 1e-6);
  for (int i = 0; i < 64; ++i) {
    CHECK(b.eigenvalues[i] >= -1e-8);
    CHECK(b.eigenvalues[i] <= 2 + 1e-8);
    const Eigen::VectorXd v = b.eigenvectors.col(i);
    CHECK((L * v - b.eigenvalues[i] * v).norm() <= 1e-6);
  }
}

TEST_CASE("eigendecompose precondition") {
  SparseMatrix L(3, 3);
  CHECK_THROWS_AS(eigendecompose(L, 4, 0), InvalidArgument);
  CHECK_THROWS_AS(eigendecompose(L, 0, 0), InvalidArgument);
}

TEST_CASE("predict_k examples") {
  Eigen::VectorXd flat = Eigen::VectorXd::Constant(6, 0.7);
  CHECK(predict_k(flat, 3, 10) == 3);

  Eigen::VectorXd fixture(5);
  fixture << 0, 0.1, 0.12, 1.8, 1.9;
  const double mu = fixture.mean();
  const double sigma = std::sqrt((fixture.array() - mu).square().mean());
  CHECK(mu == doctest::Approx(0.784));
  CHECK(sigma == doctest::Approx(0.872).epsilon(1e-3));
  CHECK(predict_k(fixture, 1, 10) == 2);

  Eigen::VectorXd strict(2);
  strict << 0, 2;
  CHECK(predict_k(strict, 1, 10) == 1);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd s(20);
    for (auto& x : s) x = u(rng);
    std::sort(s.begin(), s.end());
    const int lo = 1 + static_cast<int>(rng() % 5), hi = lo + static_cast<int>(rng() % 5);
    const int k = predict_k(s, lo, hi);
    CHECK(k >= lo);
    CHECK(k <= hi);
  }
}

TEST_CASE("k-means: permutation equivariance and tie rule") {
  Eigen::MatrixXd pts(6, 2);
  pts << 0, 0, 0.1, 0, 0, 0.1, 5, 5, 5.1, 5, 5, 5.1;
  auto a = kmeans(pts, 2, 9);
  CHECK(a.converged);
  Eigen::MatrixXd shuffled(6, 2);
  const std::vector<int> order = {4, 1, 5, 0, 3, 2};
  for (int i = 0; i < 6; ++i) shuffled.row(i) = pts.row(order[i]);
  auto b = kmeans(shuffled, 2, 9);
  std::vector<int> back(6);
  for (int i = 0; i < 6; ++i) back[order[i]] = b.labels[i];
  CHECK(same_partition(a.labels, back));

  Eigen::MatrixXd dup = Eigen::MatrixXd::Zero(4, 1);
  auto c = kmeans(dup, 2, 1);
  std::set<int> used(c.labels.begin(), c.labels.end());
  CHECK(used.size() == 2);
}

TEST_CASE("bridged cubes split at the bridge, matching a brute-force normalized cut") {
  FaceTags tags;
  auto m = make_bridged_cubes(&tags);
  REQUIRE(m.num_faces() == 28);
  auto g = build_dual_graph(m, build_topology(m));
  REQUIRE(g.node_count == 28);
  const Eigen::MatrixXd W(g.affinity);
  const int n = 28;
  std::vector<std::vector<std::pair<int, double>>> nbr(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (W(i, j) > 0) nbr[i].emplace_back(j, W(i, j));
  const Eigen::VectorXd deg = W.rowwise().sum();
  const double vol = deg.sum();

  // Gray-code walk over all 2-partitions with face 0 fixed on side A
  std::vector<char> side(n, 0);
  double cut = 0.0, vol_b = 0.0, best = std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0, gray = 0;
  for (std::uint32_t step = 1; step < (1u << (n - 1)); ++step) {
    const int bit = std::countr_zero(step);
    const int v = bit + 1;
    for (const auto& [u, w] : nbr[v]) cut += side[u] == side[v] ? w : -w;
    side[v] ^= 1;
    vol_b += side[v] ? deg[v] : -deg[v];
    gray ^= 1u << bit;
    const double ncut = cut / vol_b + cut / (vol - vol_b);
    if (ncut < best) {
      best = ncut;
      best_mask = gray;
    }
  }
  std::vector<int> oracle(n, 0);
  for (int v = 1; v < n; ++v) oracle[v] = (best_mask >> (v - 1)) & 1;

  std::vector<int> cube_faces;
  for (int f = 0; f < n; ++f)
    if (tags[f] != 2) cube_faces.push_back(f);
  auto restrict_to = [&](const std::vector<int>& labels) {
    std::vector<int> out;
    for (int f : cube_faces) out.push_back(labels[f]);
    return out;
  };
  std::vector<int> truth;
  for (int f : cube_faces) truth.push_back(tags[f]);
  CHECK(same_partition(restrict_to(oracle), truth));

  SegmentationResult first;
  for (int run = 0; run < 5; ++run) {
    auto seg = segment(m, 2, {});
    CHECK(seg.k == 2);
    CHECK(same_partition(restrict_to(seg.face_labels), truth));
    if (run == 0) first = seg;
    else CHECK(seg.face_labels == first.face_labels);
  }
}

TEST_CASE("segment: sphere with k = 1, determinism and partition") {
  auto sphere = make_icosphere(3);
  auto one = segment(sphere, 1, {});
  CHECK(one.k == 1);
  CHECK(one.segments.size() == 1);
  CHECK(one.segments[0].size() == static_cast<std::size_t>(sphere.num_faces()));

  SegmentParams p;
  p.seed = 11;
  auto star = make_star(3);
  auto a = segment(star, std::nullopt, p);
  auto b = segment(star, std::nullopt, p);
  CHECK(a.face_labels == b.face_labels);
  CHECK(a.k >= 1);
  std::vector<int> seen(star.num_faces(), 0);
  for (const auto& s : a.segments)
    for (int f : s) ++seen[f];
  for (int c : seen) CHECK(c == 1);
  std::set<int> distinct(a.face_labels.begin(), a.face_labels.end());
  CHECK(static_cast<int>(distinct.size()) == a.k);
}

TEST_CASE("segment: permutation equivariance") {
  // jitter breaks the three-fold symmetry, whose repeated eigenvalues leave
  // the embedding defined only up to rotation
  auto m = make_star(2, 3);
  std::mt19937_64 jitter(21);
  std::uniform_real_distribution<double> du(-0.02, 0.02);
  for (Index v = 0; v < m.num_vertices(); ++v)
    for (int c = 0; c < 3; ++c) m.vertices(v, c) += du(jitter);
  std::vector<int> order(m.num_faces());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(5);
  std::shuffle(order.begin(), order.end(), rng);
  auto shuffled = permute_faces(m, order);
  auto a = segment(m, 3, {});
  auto b = segment(shuffled, 3, {});
  std::vector<int> back(m.num_faces());
  for (std::size_t i = 0; i < order.size(); ++i) back[order[i]] = b.face_labels[i];
  CHECK(same_partition(a.face_labels, back));
}

TEST_CASE("segment: disconnected input attaches minor pieces") {
  auto two = merge({make_icosphere(2), make_icosphere(1, 0.5, Vec3(4, 0, 0))});
  auto seg = segment(two, 2, {});
  CHECK(seg.face_labels.size() == static_cast<std::size_t>(two.num_faces()));
  CHECK_FALSE(seg.warnings.empty());
}

TEST_CASE("segment rejects impossible k") {
  auto tri = make_fan(2);
  CHECK_THROWS_AS(segment(tri, 3, {}), InvalidArgument);
  CHECK_THROWS_AS(segment(tri, 0, {}), InvalidArgument);
}

TEST_CASE("stabilization resolution") {
  std::vector<SweepPoint> sweep(5);
  const long res[] = {15000, 20000, 25000, 30000, 35000};
  for (int i = 0; i < 5; ++i) sweep[i].resolution = res[i];
  for (auto& s : sweep) s.predicted_k = 4;
  CHECK(stabilization_resolution(sweep) == 15000);
  sweep[0].predicted_k = 6;
  sweep[1].predicted_k = 5;
  CHECK(stabilization_resolution(sweep) == 25000);
  sweep[3].predicted_k = 7;
  CHECK(stabilization_resolution(sweep) == 35000);
  CHECK_FALSE(stabilization_resolution(sweep, 2).has_value());
}

TEST_CASE("stability sweep on a small mesh") {
  RemeshParams rp;
  auto sweep = stability_sweep(make_icosphere(2), {600, 800}, {}, rp);
  REQUIRE(sweep.size() == 2);
  for (const auto& s : sweep) {
    CHECK(std::abs(s.faces - s.resolution) <= 0.02 * s.resolution);
    CHECK(s.predicted_k >= 1);
  }
  CHECK_THROWS_AS(stability_sweep(make_icosphere(2), {800, 600}, {}, rp), InvalidArgument);
}
