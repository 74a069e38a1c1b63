#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "../support/oracles.hpp"
#include "occlume/common/error.hpp"
#include "occlume/geomesh/cloud_io.hpp"
#include "occlume/geomesh/geomesh.hpp"
#include "occlume/geomesh/procedural.hpp"
#include "occlume/occlusion/generate.hpp"

using namespace occlume;
using namespace occlume::occlusion;
using geomesh::Mesh;

namespace {

PointCloud dense_sphere(std::size_t n, std::uint64_t seed) {
  return geomesh::sample_surface(geomesh::make_ellipsoid(1, 1, 1, 64, 128), n, seed);
}

double min_pairwise(const std::vector<Vec3>& v) {
  double best = 1e300;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) best = std::min(best, (v[i] - v[j]).norm());
  return best;
}

bool orthonormal(const Mat3& r) { return (r * r.transpose() - Mat3::Identity()).norm() < 1e-9 && std::abs(r.determinant() - 1.0) < 1e-9; }

}  // namespace

TEST_CASE("dodecahedron rig geometry") {
  const auto rig = dodecahedron_rig(2.0);
  REQUIRE(rig.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(rig.centers[i].norm() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rig.views[i].to_camera(rig.centers[i]).norm() < 1e-9);
    CHECK(orthonormal(rig.views[i].R));
    // Looking at the origin: it lies on the optical axis at depth = radius.
    const Vec3 o = rig.views[i].to_camera(Vec3::Zero());
    CHECK(o.head<2>().norm() < 1e-9);
    CHECK(o.z() == doctest::Approx(2.0));
  }
  const auto ref = oracle::dodecahedron_vertices();
  for (const auto& c : rig.centers) {
    double nearest = 1e300;
    for (const auto& v : ref) nearest = std::min(nearest, (c / 2.0 - v).norm());
    CHECK(nearest < 1e-9);
  }
  const double edge_angle = std::acos(std::sqrt(5.0) / 3.0);
  CHECK(min_pairwise(rig.centers) == doctest::Approx(2.0 * 2.0 * std::sin(edge_angle / 2.0)).epsilon(1e-9));
  CHECK(min_pairwise(rig.centers) / 2.0 == doctest::Approx(0.714).epsilon(1e-3));
}

TEST_CASE("look_at") {
  const auto ex = look_at(Vec3(0, 0, 2), Vec3::Zero(), Vec3(0, 1, 0));
  CHECK(ex.to_camera(Vec3::Zero()).isApprox(Vec3(0, 0, 2)));
  CHECK(ex.to_camera(Vec3(0, 0, 1)).z() == doctest::Approx(1.0));
  CHECK(ex.center().isApprox(Vec3(0, 0, 2)));
  for (double s : {1.0, -1.0}) {
    const auto pole = look_at(Vec3(0, 3 * s, 0), Vec3::Zero(), Vec3(0, 1, 0));
    CHECK(orthonormal(pole.R));
    CHECK(pole.to_camera(Vec3::Zero()).isApprox(Vec3(0, 0, 3)));
  }
}

TEST_CASE("projection of the principal point") {
  Intrinsics ins;
  ins.fx = ins.fy = 500;
  ins.u0 = ins.v0 = 128;
  ins.width = ins.height = 256;
  const auto ex = look_at(Vec3(0, 0, 2), Vec3::Zero(), Vec3(0, 1, 0));
  const auto dm = project_zbuffer(PointCloud({Vec3::Zero()}), ex, ins);
  CHECK(dm.filled() == 1);
  CHECK(dm.at(128, 128) == 2.0);
}

TEST_CASE("z-buffer keeps the nearest point on a ray") {
  Intrinsics ins;
  const Extrinsics ex;  // identity: camera at origin looking along +z
  const auto dm = project_zbuffer(PointCloud({Vec3(0.2, 0.1, 2.0), Vec3(0.15, 0.075, 1.5)}), ex, ins);
  CHECK(dm.filled() == 1);
  CHECK(dm.at(74, 69) == 1.5);
}

TEST_CASE("points behind the camera or off-image are dropped") {
  Intrinsics ins;
  const Extrinsics ex;
  const auto dm = project_zbuffer(PointCloud({Vec3(0, 0, -1), Vec3(10, 0, 1)}), ex, ins);
  CHECK(dm.filled() == 0);
  CHECK(reconstruct(dm, ex, ins).empty());
}

TEST_CASE("single point round trip within the quantization bound") {
  Intrinsics ins;
  const auto ex = look_at(Vec3(1.2, -0.7, 1.6), Vec3::Zero(), Vec3(0, 0, 1));
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Vec3 p = oracle::random_cloud(1, s, -0.5, 0.5)[0];
    const auto back = reconstruct(project_zbuffer(PointCloud({p}), ex, ins), ex, ins);
    REQUIRE(back.size() == 1);
    CHECK((back.points[0] - p).norm() <= quantization_bound(ex.to_camera(p).z(), ins) + 1e-12);
  }
}

TEST_CASE("sphere depths agree with the ray oracle") {
  Intrinsics ins;
  const double radius = 2.2;
  const auto ex = look_at(Vec3(0, 0, radius), Vec3::Zero(), Vec3(0, 1, 0));
  const auto pc = dense_sphere(524288, 1);
  const auto dm = project_zbuffer(pc, ex, ins);
  REQUIRE(dm.filled() > 100);
  // The front surface seen through a pixel spans the depths hit by the rays
  // through its corners and center. When some of those rays miss, the pixel
  // straddles the silhouette and the visible cap reaches back to its depth.
  const Vec3 c = ex.to_camera(Vec3::Zero());
  const double silhouette = (radius * radius - 1.0) / radius;
  std::size_t agree = 0;
  for (int v = 0; v < dm.height; ++v)
    for (int u = 0; u < dm.width; ++u) {
      if (dm.empty_at(u, v)) continue;
      double lo = 1e300, hi = -1e300;
      int hits = 0;
      for (double a : {0.0, 0.5, 1.0})
        for (double b : {0.0, 0.5, 1.0}) {
          const Vec3 dir((u + a - ins.u0) / ins.fx, (v + b - ins.v0) / ins.fy, 1.0);
          if (const auto t = oracle::ray_sphere(Vec3::Zero(), dir, c, 1.0)) {
            lo = std::min(lo, *t), hi = std::max(hi, *t);
            ++hits;
          }
        }
      if (hits < 9) hi = silhouette;
      CHECK(dm.at(u, v) >= radius - 1.0 - 1e-9);
      agree += dm.at(u, v) >= lo - 1e-9 && dm.at(u, v) <= hi + 1e-9;
    }
  CHECK(static_cast<double>(agree) >= 0.99 * static_cast<double>(dm.filled()));
  const auto rec = reconstruct(dm, ex, ins);
  std::size_t front = 0;
  for (const auto& p : rec.points) front += p.z() > -0.05;
  CHECK(static_cast<double>(front) >= 0.99 * static_cast<double>(rec.size()));
}

TEST_CASE("make_occluded on a unit sphere") {
  GenerationConfig cfg;
  const auto mesh = geomesh::make_ellipsoid(1, 1, 1, 48, 96);
  const auto rig = dodecahedron_rig(cfg.radius);
  for (std::size_t v : {0u, 7u, 19u}) {
    const auto out = make_occluded(mesh, rig.views[v], cfg, 5);
    REQUIRE(out.has_value());
    CHECK(out->size() == cfg.points);
    const Vec3 dir = rig.centers[v].normalized();
    std::size_t front = 0;
    for (const auto& p : out->points) front += p.dot(dir) > -0.05;
    CHECK(static_cast<double>(front) >= 0.99 * static_cast<double>(out->size()));
  }
  const auto a = make_occluded(mesh, rig.views[3], cfg, 11);
  const auto b = make_occluded(mesh, rig.views[3], cfg, 11);
  CHECK(a->points == b->points);
}

TEST_CASE("degenerate meshes are unprojectable") {
  GenerationConfig cfg;
  cfg.density = 4096;
  const auto rig = dodecahedron_rig(cfg.radius);
  Mesh flat;
  flat.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  flat.faces = {{0, 1, 2}};
  CHECK_FALSE(make_occluded(flat, rig.views[0], cfg, 1).has_value());
  CHECK_FALSE(occlude_cloud(PointCloud({Vec3(0, 0, 0)}), rig.views[0], cfg, 1).has_value());
}

TEST_CASE("cross-view split parity") {
  CHECK(split_for_view(7) == Split::Train);
  CHECK(split_for_view(20) == Split::Test);
  const auto split = cross_view_split(dodecahedron_rig(2.0));
  CHECK(split.train.size() == 10);
  CHECK(split.test.size() == 10);
  for (auto v : split.train) CHECK(v % 2 == 1);
  for (auto v : split.test) CHECK(v % 2 == 0);
  CHECK(parse_split(split_name(Split::Test)) == Split::Test);
}

TEST_CASE("generation config round trip") {
  GenerationConfig cfg;
  cfg.density = 1234;
  cfg.points = 77;
  const auto back = GenerationConfig::from_kv(cfg.to_kv());
  CHECK(back.to_kv().to_string() == cfg.to_kv().to_string());
  cfg.points = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("build_dataset on a small mesh tree") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "occlume_occlusion_build";
  fs::remove_all(root);
  fs::create_directories(root / "meshes" / "box" / "train");
  fs::create_directories(root / "meshes" / "torus" / "test");
  geomesh::write_file(root / "meshes" / "box" / "train" / "a.off", geomesh::write_off(geomesh::make_box(1, 1.2, 0.8)));
  geomesh::write_file(root / "meshes" / "torus" / "test" / "b.off", geomesh::write_off(geomesh::make_torus(1, 0.3)));

  GenerationConfig cfg;
  cfg.density = 16384;
  cfg.points = 128;
  cfg.seed = 4;
  const auto rep = build_dataset(root / "meshes", root / "out", cfg);
  const auto& m = rep.manifest;
  CHECK(m.records.size() + m.skipped <= 40);
  CHECK(m.records.size() == 40);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "out" / "clouds")) files += e.is_regular_file();
  CHECK(files == m.records.size());
  CHECK_NOTHROW(m.verify(root / "out"));
  CHECK(m.count(Split::Train) == 20);
  CHECK(m.count(Split::Test) == 20);
  for (const auto& r : m.records) CHECK(r.split == split_for_view(r.view));

  const std::string first = geomesh::read_file(root / "out" / "manifest.tsv");
  fs::remove_all(root / "out");
  build_dataset(root / "meshes", root / "out", cfg);
  CHECK(geomesh::read_file(root / "out" / "manifest.tsv") == first);
  CHECK(DatasetManifest::parse(first).serialize() == first);

  // A second run over a finished build reuses every sample.
  const auto again = build_dataset(root / "meshes", root / "out", cfg);
  CHECK(again.reused == 40);
  fs::remove_all(root);
}
