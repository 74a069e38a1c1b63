#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "occlume/geomesh/types.hpp"

namespace occlume::geomesh {

/// Parse ASCII OFF. Accepts counts on the header line ("OFF490 552 0"),
/// `#` comments, trailing per-vertex/per-face attributes, and polygons
/// (fan-triangulated from their first vertex). Triangles that collapse to
/// repeated indices are dropped. Errors name the offending line.
Mesh parse_off(std::string_view text);

/// Write ASCII OFF with round-trip exact coordinates.
std::string write_off(const Mesh& mesh);

Mesh load_off(const std::string& path);

/// Translate the centroid to the origin and scale so the farthest point has
/// norm 1. A single point (or all-coincident cloud) maps to the origin.
PointCloud normalize_unit_sphere(const PointCloud& pc);

/// `n` points drawn uniformly over the surface: faces are chosen with
/// probability proportional to area, then a uniform barycentric point.
PointCloud sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace occlume::geomesh
