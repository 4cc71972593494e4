#pragma once

#include <Eigen/Geometry>
#include <vector>

#include "fabseg/mesh.hpp"

namespace fabseg {

/// Face tags, when requested, name the generating part of each face.
using FaceTags = std::vector<int>;

TriangleMesh make_icosphere(int subdivisions, double radius = 1.0, const Vec3& center = Vec3::Zero());

/// Axis-aligned box, each side split into divisions x divisions quads.
TriangleMesh make_box(const Vec3& size, const Vec3& center = Vec3::Zero(), int divisions = 1);

/// Surface of revolution around +z. `profile` holds (radius, z) pairs from
/// bottom to top; a zero radius at either end closes to a pole, otherwise the
/// end is capped when `capped` is set. Tag of a face = profile span index,
/// with caps tagged -1 (bottom) and -2 (top).
TriangleMesh make_revolved(const std::vector<Eigen::Vector2d>& profile, int segments, bool capped = true,
                           FaceTags* tags = nullptr);

TriangleMesh make_cylinder(double radius, double height, int segments, int rings, bool capped = true);
TriangleMesh make_torus(double major_radius, double minor_radius, int major_segments, int minor_segments);

/// Icosphere pulled out into `arms` lobes in the xy-plane.
TriangleMesh make_star(int subdivisions, int arms = 3, double reach = 1.5);

/// Flat triangle fan of `count` faces around the origin.
TriangleMesh make_fan(int count, double radius = 1.0);

/// Three triangles in a row.
TriangleMesh make_strip();

/// Two unit cubes joined by a thin four-triangle strip (28 faces). Tags: 0 for
/// the first cube, 1 for the second, 2 for the bridge.
TriangleMesh make_bridged_cubes(FaceTags* tags = nullptr);

TriangleMesh transformed(const TriangleMesh& mesh, const Eigen::Affine3d& transform);

/// Copy with faces reordered by `order` (new face i = old face order[i]).
TriangleMesh permute_faces(const TriangleMesh& mesh, const std::vector<int>& order);

}  // namespace fabseg
