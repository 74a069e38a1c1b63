#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "occlume/common/kv_config.hpp"
#include "occlume/geomesh/types.hpp"
#include "occlume/occlusion/camera.hpp"
#include "occlume/occlusion/rig.hpp"

namespace occlume::occlusion {

using geomesh::Mesh;

/// Parameters of the occluded-cloud synthesis.
struct GenerationConfig {
  std::size_t density = 524288;  // surface samples before projection
  Intrinsics intrinsics;
  double radius = 2.2;            // camera distance from the origin
  std::size_t points = 1024;      // N of every output cloud
  std::size_t min_pixels = 64;    // fewer non-empty pixels: unprojectable
  std::uint64_t seed = 0;

  void validate() const;

  /// Keys: density, width, height, fx, fy, u0, v0, radius, points, threshold, seed.
  static GenerationConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
};

/// Occlude an already-normalized dense cloud from one view, then resample to
/// cfg.points (FPS when there are enough points, padding with uniformly drawn
/// duplicates otherwise). nullopt means unprojectable.
std::optional<PointCloud> occlude_cloud(const PointCloud& dense, const Extrinsics& view,
                                        const GenerationConfig& cfg, std::uint64_t seed);

/// Full pipeline: sample_surface -> normalize -> project -> reconstruct -> resample.
/// Meshes without surface area are unprojectable.
std::optional<PointCloud> make_occluded(const Mesh& mesh, const Extrinsics& view,
                                        const GenerationConfig& cfg, std::uint64_t seed);

struct ManifestRecord {
  std::string sample_id;
  int class_id = 0;
  std::size_t view = 0;  // 1-based
  Split split = Split::Train;
  std::string path;      // relative to the manifest directory
  std::size_t count = 0;
};

/// Listing of a generated dataset; serialized as manifest.tsv.
struct DatasetManifest {
  std::uint64_t cfg_hash = 0;
  std::uint64_t seed = 0;
  std::size_t skipped = 0;
  std::vector<std::string> classes;
  std::vector<ManifestRecord> records;

  std::size_t count(Split s) const;

  std::string serialize() const;
  static DatasetManifest parse(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);

  /// Throws unless every file exists and decodes to the declared count, paths
  /// are unique, and splits match view parity.
  void verify(const std::filesystem::path& root) const;
};

struct SkippedPair {
  std::string sample_id;
  std::size_t view = 0;
};

struct BuildReport {
  DatasetManifest manifest;
  std::vector<SkippedPair> skipped;
  std::size_t reused = 0;  // records taken over from an earlier compatible build
};

/// Walk `mesh_root/<class>/<split>/*.off`, occlude every mesh from the 20
/// dodecahedral views and write `out_dir/clouds/...` plus `out_dir/manifest.tsv`.
/// Dataset split follows view parity only. An existing manifest with the same
/// config hash lets finished samples be reused.
BuildReport build_dataset(const std::filesystem::path& mesh_root,
                          const std::filesystem::path& out_dir, const GenerationConfig& cfg);

}  // namespace occlume::occlusion
