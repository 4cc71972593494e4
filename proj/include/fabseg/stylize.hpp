#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fabseg/labels.hpp"
#include "fabseg/mesh.hpp"
#include "fabseg/spectral.hpp"

namespace fabseg {

struct VertexMask {
  std::vector<bool> functional;  // per vertex; true holds the vertex in place

  std::size_t masked_count() const;
};

/// A vertex is functional when any incident face lies in a functional segment.
VertexMask build_mask(const TriangleMesh& mesh, const SegmentationResult& segmentation,
                      const std::vector<FunctionalityLabel>& labels);

using Rgb = std::array<double, 3>;

struct StyleSpec {
  double amplitude = 1.0;  // mm, at most 10% of the bounding-box diagonal
  double frequency = 4.0;  // cycles per bounding-box diagonal
  int octaves = 3;
  std::vector<Rgb> palette{{0.20, 0.30, 0.55}, {0.85, 0.55, 0.25}, {0.95, 0.90, 0.80}};
  std::uint64_t seed = 0;
};

void validate_style(const StyleSpec& spec, double diagonal);

/// Seeded gradient noise, summed over octaves and clamped to [-1, 1].
class NoiseField {
 public:
  NoiseField(std::uint64_t seed, int octaves);
  double operator()(const Vec3& p) const;

 private:
  double perlin(const Vec3& p) const;
  std::array<int, 512> perm_{};
  int octaves_;
};

/// Displaces unmasked vertices along their normals by amplitude * noise and
/// colors them from the palette. Masked vertices keep their exact position
/// and their color (neutral gray when the input has none).
TriangleMesh apply_style(const TriangleMesh& mesh, const VertexMask& mask, const StyleSpec& spec);

}  // namespace fabseg
