#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "occlume/geomesh/types.hpp"

namespace occlume::geomesh {

/// Latitude/longitude ellipsoid with semi-axes (a, b, c).
Mesh make_ellipsoid(double a, double b, double c, std::size_t rings = 24,
                    std::size_t segments = 48);

/// Axis-aligned box centered at the origin with the given edge lengths.
Mesh make_box(double dx, double dy, double dz);

/// Torus around the z axis: ring radius `major`, tube radius `minor`.
Mesh make_torus(double major, double minor, std::size_t rings = 48, std::size_t sides = 24);

/// Write `per_class` jittered sphere, box and torus meshes as
/// `root/<class>/train/<class>_NNN.off`. Returns the class names.
std::vector<std::string> write_toy_meshes(const std::filesystem::path& root, std::size_t per_class,
                                          std::uint64_t seed);

}  // namespace occlume::geomesh
