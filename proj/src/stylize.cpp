#include "fabseg/stylize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fabseg/error.hpp"
#include "fabseg/parallel.hpp"
#include "fabseg/rng.hpp"

namespace fabseg {

namespace {

constexpr int kMaxOctaves = 16;

double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

double grad(int hash, double x, double y, double z) {
  const int h = hash & 15;
  const double u = h < 8 ? x : y;
  const double v = h < 4 ? y : (h == 12 || h == 14 ? x : z);
  return ((h & 1) ? -u : u) + ((h & 2) ? -v : v);
}

double lerp(double t, double a, double b) { return a + t * (b - a); }

}  // namespace

std::size_t VertexMask::masked_count() const { return static_cast<std::size_t>(std::count(functional.begin(), functional.end(), true)); }

VertexMask build_mask(const TriangleMesh& mesh, const SegmentationResult& segmentation,
                      const std::vector<FunctionalityLabel>& labels) {
  if (static_cast<Index>(segmentation.face_labels.size()) != mesh.num_faces())
    throw InvalidArgument("segmentation does not match the mesh face count");
  if (static_cast<int>(labels.size()) != segmentation.k)
    throw InvalidArgument("label-count mismatch: " + std::to_string(labels.size()) + " labels for k=" +
                          std::to_string(segmentation.k));
  VertexMask mask;
  mask.functional.assign(static_cast<std::size_t>(mesh.num_vertices()), false);
  for (Index f = 0; f < mesh.num_faces(); ++f) {
    const int s = segmentation.face_labels[f];
    if (s < 0 || s >= segmentation.k) throw InvalidArgument("face label outside 0..k-1");
    if (!is_functional(labels[s])) continue;
    for (int c = 0; c < 3; ++c) mask.functional[mesh.faces(f, c)] = true;
  }
  return mask;
}

void validate_style(const StyleSpec& spec, double diagonal) {
  if (!std::isfinite(spec.amplitude) || spec.amplitude < 0.0) throw InvalidArgument("amplitude must be a finite value >= 0");
  if (spec.amplitude > 0.1 * diagonal)
    throw InvalidArgument("amplitude " + std::to_string(spec.amplitude) + " exceeds 10% of the bounding-box diagonal (" +
                          std::to_string(0.1 * diagonal) + ")");
  if (!std::isfinite(spec.frequency) || spec.frequency <= 0.0) throw InvalidArgument("frequency must be positive");
  if (spec.octaves < 1 || spec.octaves > kMaxOctaves) throw InvalidArgument("octaves must lie in [1, 16]");
  if (spec.palette.empty()) throw InvalidArgument("palette needs at least one color");
  for (const auto& c : spec.palette)
    for (double x : c)
      if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("palette channels must lie in [0, 1]");
}

NoiseField::NoiseField(std::uint64_t seed, int octaves) : octaves_(octaves) {
  std::array<int, 256> p;
  std::iota(p.begin(), p.end(), 0);
  Rng rng(seed);
  for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  for (std::size_t i = 0; i < 512; ++i) perm_[i] = p[i & 255];
}

double NoiseField::perlin(const Vec3& q) const {
  const double fx = std::floor(q.x()), fy = std::floor(q.y()), fz = std::floor(q.z());
  const int X = static_cast<int>(static_cast<long long>(fx) & 255);
  const int Y = static_cast<int>(static_cast<long long>(fy) & 255);
  const int Z = static_cast<int>(static_cast<long long>(fz) & 255);
  const double x = q.x() - fx, y = q.y() - fy, z = q.z() - fz;
  const double u = fade(x), v = fade(y), w = fade(z);
  const auto& P = perm_;
  const int A = P[X] + Y, AA = P[A] + Z, AB = P[A + 1] + Z;
  const int B = P[X + 1] + Y, BA = P[B] + Z, BB = P[B + 1] + Z;
  return lerp(w,
              lerp(v, lerp(u, grad(P[AA], x, y, z), grad(P[BA], x - 1, y, z)),
                   lerp(u, grad(P[AB], x, y - 1, z), grad(P[BB], x - 1, y - 1, z))),
              lerp(v, lerp(u, grad(P[AA + 1], x, y, z - 1), grad(P[BA + 1], x - 1, y, z - 1)),
                   lerp(u, grad(P[AB + 1], x, y - 1, z - 1), grad(P[BB + 1], x - 1, y - 1, z - 1))));
}

double NoiseField::operator()(const Vec3& p) const {
  double sum = 0.0, norm = 0.0, amp = 1.0, scale = 1.0;
  for (int o = 0; o < octaves_; ++o) {
    sum += amp * perlin(p * scale);
    norm += amp;
    amp *= 0.5;
    scale *= 2.0;
  }
  return std::clamp(sum / norm, -1.0, 1.0);
}

TriangleMesh apply_style(const TriangleMesh& mesh, const VertexMask& mask, const StyleSpec& spec) {
  validate(mesh);
  if (static_cast<Index>(mask.functional.size()) != mesh.num_vertices())
    throw InvalidArgument("mask has " + std::to_string(mask.functional.size()) + " entries for " +
                          std::to_string(mesh.num_vertices()) + " vertices");
  const double diagonal = bounding_box_diagonal(mesh);
  validate_style(spec, diagonal);

  TriangleMesh out = mesh;
  ColorMatrix colors = mesh.vertex_colors ? *mesh.vertex_colors : ColorMatrix::Constant(mesh.num_vertices(), 3, 0.5);
  const VertexMatrix normals = vertex_normals(mesh);
  const NoiseField noise(spec.seed, spec.octaves);
  const double scale = diagonal > 0.0 ? spec.frequency / diagonal : 0.0;
  const auto palette_size = static_cast<double>(spec.palette.size());

  parallel_for(static_cast<std::size_t>(mesh.num_vertices()), [&](std::size_t i) {
    const auto v = static_cast<Index>(i);
    if (mask.functional[i]) return;
    const Vec3 p = mesh.vertex(v);
    const double n = noise(p * scale);
    const Vec3 normal = normals.row(v).transpose();
    Vec3 moved = p + (spec.amplitude * n) * normal;
    // rounding in the sum may overshoot the bound by an ulp
    double shrink = 1.0;
    while ((moved - p).norm() > spec.amplitude && shrink > 0.0) {
      shrink -= 1e-9;
      moved = p + (spec.amplitude * n * shrink) * normal;
    }
    out.vertices.row(v) = moved.transpose();

    const double t = (n + 1.0) / 2.0 * (palette_size - 1.0);
    const auto lo = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, palette_size - 1.0));
    const std::size_t hi = std::min(lo + 1, spec.palette.size() - 1);
    const double frac = t - static_cast<double>(lo);
    for (int c = 0; c < 3; ++c) colors(v, c) = lerp(frac, spec.palette[lo][c], spec.palette[hi][c]);
  });
  out.vertex_colors = std::move(colors);
  return out;
}

}  // namespace fabseg
