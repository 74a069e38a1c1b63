#include "occlume/geomesh/procedural.hpp"

#include <cmath>
#include <numbers>

#include <cstdio>

#include "occlume/common/error.hpp"
#include "occlume/common/rng.hpp"
#include "occlume/geomesh/cloud_io.hpp"
#include "occlume/geomesh/geomesh.hpp"

namespace occlume::geomesh {

Mesh make_ellipsoid(double a, double b, double c, std::size_t rings, std::size_t segments) {
  if (rings < 2 || segments < 3) throw InvalidArgument("make_ellipsoid: tessellation too coarse");
  Mesh m;
  const double pi = std::numbers::pi;
  m.vertices.emplace_back(0.0, 0.0, c);
  for (std::size_t r = 1; r < rings; ++r) {
    const double theta = pi * static_cast<double>(r) / static_cast<double>(rings);
    for (std::size_t s = 0; s < segments; ++s) {
      const double phi = 2.0 * pi * static_cast<double>(s) / static_cast<double>(segments);
      m.vertices.emplace_back(a * std::sin(theta) * std::cos(phi),
                              b * std::sin(theta) * std::sin(phi), c * std::cos(theta));
    }
  }
  m.vertices.emplace_back(0.0, 0.0, -c);
  const auto south = static_cast<std::uint32_t>(m.vertices.size() - 1);
  auto ring_vertex = [&](std::size_t r, std::size_t s) {
    return static_cast<std::uint32_t>(1 + (r - 1) * segments + s % segments);
  };
  for (std::size_t s = 0; s < segments; ++s) {
    m.faces.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
  }
  for (std::size_t r = 1; r + 1 < rings; ++r) {
    for (std::size_t s = 0; s < segments; ++s) {
      const auto a0 = ring_vertex(r, s), a1 = ring_vertex(r, s + 1);
      const auto b0 = ring_vertex(r + 1, s), b1 = ring_vertex(r + 1, s + 1);
      m.faces.push_back({a0, b0, b1});
      m.faces.push_back({a0, b1, a1});
    }
  }
  for (std::size_t s = 0; s < segments; ++s) {
    m.faces.push_back({south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});
  }
  return m;
}

Mesh make_box(double dx, double dy, double dz) {
  Mesh m;
  const double hx = dx / 2, hy = dy / 2, hz = dz / 2;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? hx : -hx, (i & 2) ? hy : -hy, (i & 4) ? hz : -hz);
  }
  const std::uint32_t quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                                     {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

Mesh make_torus(double major, double minor, std::size_t rings, std::size_t sides) {
  if (rings < 3 || sides < 3) throw InvalidArgument("make_torus: tessellation too coarse");
  Mesh m;
  const double pi = std::numbers::pi;
  for (std::size_t r = 0; r < rings; ++r) {
    const double u = 2.0 * pi * static_cast<double>(r) / static_cast<double>(rings);
    for (std::size_t s = 0; s < sides; ++s) {
      const double v = 2.0 * pi * static_cast<double>(s) / static_cast<double>(sides);
      const double rad = major + minor * std::cos(v);
      m.vertices.emplace_back(rad * std::cos(u), rad * std::sin(u), minor * std::sin(v));
    }
  }
  auto idx = [&](std::size_t r, std::size_t s) {
    return static_cast<std::uint32_t>((r % rings) * sides + s % sides);
  };
  for (std::size_t r = 0; r < rings; ++r) {
    for (std::size_t s = 0; s < sides; ++s) {
      m.faces.push_back({idx(r, s), idx(r + 1, s), idx(r + 1, s + 1)});
      m.faces.push_back({idx(r, s), idx(r + 1, s + 1), idx(r, s + 1)});
    }
  }
  return m;
}

std::vector<std::string> write_toy_meshes(const std::filesystem::path& root, std::size_t per_class,
                                          std::uint64_t seed) {
  const std::vector<std::string> classes{"box", "sphere", "torus"};
  for (const auto& name : classes) {
    for (std::size_t i = 0; i < per_class; ++i) {
      CounterRng rng(seed, name, i);
      Mesh mesh;
      if (name == "sphere") {
        mesh = make_ellipsoid(rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2));
      } else if (name == "box") {
        mesh = make_box(rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4), rng.uniform(0.6, 1.4));
      } else {
        mesh = make_torus(rng.uniform(0.8, 1.2), rng.uniform(0.25, 0.45));
      }
      char stem[64];
      std::snprintf(stem, sizeof stem, "%s_%03zu.off", name.c_str(), i);
      write_file(root / name / "train" / stem, write_off(mesh));
    }
  }
  return classes;
}

}  // namespace occlume::geomesh
