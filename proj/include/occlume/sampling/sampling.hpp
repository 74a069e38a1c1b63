#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "occlume/geomesh/types.hpp"

namespace occlume::sampling {

using geomesh::PointCloud;
using geomesh::Vec3;

/// Ordered indices into a source set of `source_size` points.
struct IndexSelection {
  std::vector<std::size_t> indices;
  std::size_t source_size = 0;

  std::size_t size() const { return indices.size(); }
  std::size_t operator[](std::size_t i) const { return indices[i]; }
};

/// Gather the selected points.
std::vector<Vec3> gather(std::span<const Vec3> points, const IndexSelection& sel);

/// `m` distinct indices drawn uniformly (partial Fisher-Yates).
IndexSelection random_sample(std::span<const Vec3> points, std::size_t m, std::uint64_t seed);
IndexSelection random_sample(const PointCloud& pc, std::size_t m, std::uint64_t seed);

/// Greedy maximin selection starting at `start`: every appended index maximizes
/// the distance to its nearest already-selected point; ties go to the lowest index.
IndexSelection farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                     std::size_t start = 0);
IndexSelection farthest_point_sample(const PointCloud& pc, std::size_t m, std::size_t start = 0);

/// Index of the point farthest from the centroid (lowest index on ties). Used as
/// an order-independent FPS start.
std::size_t farthest_from_centroid(std::span<const Vec3> points);

enum class KnnBackend { BruteForce, Grid, Auto };

/// For each query, the k nearest points sorted by (squared distance, index).
/// Every backend returns identical results.
std::vector<IndexSelection> knn(std::span<const Vec3> points, std::span<const Vec3> queries,
                                std::size_t k, KnnBackend backend = KnnBackend::Auto);
std::vector<IndexSelection> knn(const PointCloud& pc, const PointCloud& queries, std::size_t k,
                                KnnBackend backend = KnnBackend::Auto);

/// Uniform-grid accelerator for exact k-NN queries.
class KnnGrid {
 public:
  explicit KnnGrid(std::span<const Vec3> points, double points_per_cell = 2.0);

  IndexSelection query(const Vec3& q, std::size_t k) const;

 private:
  std::size_t cell_index(long ix, long iy, long iz) const;

  std::span<const Vec3> points_;
  Vec3 origin_;
  double cell_ = 1.0;
  long dims_[3] = {1, 1, 1};
  std::vector<std::size_t> cell_start_;
  std::vector<std::size_t> sorted_;
};

/// mean_p min_q |p-q|^2 + mean_q min_p |p-q|^2.
double chamfer_distance(std::span<const Vec3> p, std::span<const Vec3> q);
double chamfer_distance(const PointCloud& p, const PointCloud& q);

}  // namespace occlume::sampling
