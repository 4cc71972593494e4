#pragma once

#include <cstdint>

#include "fabseg/mesh.hpp"

namespace fabseg {

struct RemeshParams {
  long target_resolution = 25000;  // faces
  double tolerance_fraction = 0.02;
  std::uint64_t seed = 0;          // orders equal-cost collapses
  int smoothing_rounds = 3;
};

struct RemeshStats {
  long input_faces = 0;
  long output_faces = 0;
  int subdivision_rounds = 0;
  long collapses = 0;
};

/// Brings a mesh to a uniform resolution: midpoint subdivision until the face
/// count reaches the target, quadric edge-collapse down to it, then tangential
/// smoothing with every moved vertex projected back onto the input surface.
/// Boundaries, sharp creases and non-manifold edges are held in place.
TriangleMesh remesh(const TriangleMesh& mesh, const RemeshParams& params, RemeshStats* stats = nullptr);

/// One round of 1-to-4 midpoint subdivision. Geometry is unchanged.
TriangleMesh subdivide_midpoint(const TriangleMesh& mesh);

/// Quadric-error edge collapse until at most target_faces remain (or no legal
/// collapse is left). Returns the number of collapses performed in *collapses.
TriangleMesh decimate(const TriangleMesh& mesh, long target_faces, std::uint64_t seed, long* collapses = nullptr);

}  // namespace fabseg
