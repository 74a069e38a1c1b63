#include "occlume/sampling/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "occlume/common/error.hpp"
#include "occlume/common/parallel.hpp"
#include "occlume/common/rng.hpp"

namespace occlume::sampling {
namespace {

struct Candidate {
  double d2;
  std::size_t index;
  bool operator<(const Candidate& o) const {
    return d2 < o.d2 || (d2 == o.d2 && index < o.index);
  }
};

inline double squared_distance(const Vec3& a, const Vec3& b) { return (a - b).squaredNorm(); }

IndexSelection brute_force_query(std::span<const Vec3> points, const Vec3& q, std::size_t k,
                                 std::vector<Candidate>& scratch) {
  scratch.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) scratch[i] = {squared_distance(points[i], q), i};
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k),
                    scratch.end());
  IndexSelection sel;
  sel.source_size = points.size();
  sel.indices.reserve(k);
  for (std::size_t i = 0; i < k; ++i) sel.indices.push_back(scratch[i].index);
  return sel;
}

}  // namespace

std::vector<Vec3> gather(std::span<const Vec3> points, const IndexSelection& sel) {
  std::vector<Vec3> out;
  out.reserve(sel.size());
  for (auto i : sel.indices) out.push_back(points[i]);
  return out;
}

IndexSelection random_sample(std::span<const Vec3> points, std::size_t m, std::uint64_t seed) {
  const std::size_t n = points.size();
  if (m > n) {
    throw InvalidArgument("random_sample: m=" + std::to_string(m) + " exceeds N=" +
                          std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng(seed, "random_sample");
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(m);
  return {std::move(perm), n};
}

IndexSelection random_sample(const PointCloud& pc, std::size_t m, std::uint64_t seed) {
  return random_sample(pc.view(), m, seed);
}

IndexSelection farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                     std::size_t start) {
  const std::size_t n = points.size();
  if (m > n) {
    throw InvalidArgument("farthest_point_sample: m=" + std::to_string(m) + " exceeds N=" +
                          std::to_string(n));
  }
  if (m == 0) return {{}, n};
  if (start >= n) throw InvalidArgument("farthest_point_sample: start index out of range");

  IndexSelection sel;
  sel.source_size = n;
  sel.indices.reserve(m);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t current = start;
  for (std::size_t s = 0; s < m; ++s) {
    sel.indices.push_back(current);
    const Vec3 c = points[current];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_distance(points[i], c);
      if (d < nearest[i]) nearest[i] = d;
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    current = best;
  }
  return sel;
}

IndexSelection farthest_point_sample(const PointCloud& pc, std::size_t m, std::size_t start) {
  return farthest_point_sample(pc.view(), m, start);
}

std::size_t farthest_from_centroid(std::span<const Vec3> points) {
  if (points.empty()) throw InvalidArgument("farthest_from_centroid: empty input");
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = squared_distance(points[i], c);
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

KnnGrid::KnnGrid(std::span<const Vec3> points, double points_per_cell) : points_(points) {
  if (points.empty()) throw InvalidArgument("KnnGrid: empty point set");
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 extent = (hi - lo).cwiseMax(Vec3::Constant(1e-9));
  const double cells = std::max(1.0, static_cast<double>(points.size()) / points_per_cell);
  cell_ = std::cbrt(extent.prod() / cells);
  // Flat inputs make the volume collapse; fall back to the largest extent.
  cell_ = std::max(cell_, extent.maxCoeff() / 128.0);
  origin_ = lo;
  for (int a = 0; a < 3; ++a) {
    dims_[a] = std::clamp<long>(static_cast<long>(std::ceil(extent[a] / cell_)), 1, 256);
  }
  const std::size_t total = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  std::vector<std::size_t> cell_of(points.size());
  cell_start_.assign(total + 1, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    long c[3];
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp<long>(static_cast<long>(std::floor((points[i][a] - origin_[a]) / cell_)),
                              0, dims_[a] - 1);
    }
    cell_of[i] = cell_index(c[0], c[1], c[2]);
    ++cell_start_[cell_of[i] + 1];
  }
  std::partial_sum(cell_start_.begin(), cell_start_.end(), cell_start_.begin());
  sorted_.resize(points.size());
  std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < points.size(); ++i) sorted_[fill[cell_of[i]]++] = i;
}

std::size_t KnnGrid::cell_index(long ix, long iy, long iz) const {
  return static_cast<std::size_t>((iz * dims_[1] + iy) * dims_[0] + ix);
}

IndexSelection KnnGrid::query(const Vec3& q, std::size_t k) const {
  if (k > points_.size()) throw InvalidArgument("knn: k exceeds point count");
  long c[3];
  for (int a = 0; a < 3; ++a) {
    c[a] = std::clamp<long>(static_cast<long>(std::floor((q[a] - origin_[a]) / cell_)), 0,
                            dims_[a] - 1);
  }
  std::priority_queue<Candidate> heap;  // max-heap of the k best so far
  auto consider = [&](long ix, long iy, long iz) {
    const std::size_t cell = cell_index(ix, iy, iz);
    for (std::size_t s = cell_start_[cell]; s < cell_start_[cell + 1]; ++s) {
      const std::size_t i = sorted_[s];
      const Candidate cand{squared_distance(points_[i], q), i};
      if (heap.size() < k) {
        heap.push(cand);
      } else if (cand < heap.top()) {
        heap.pop();
        heap.push(cand);
      }
    }
  };

  const long max_r = std::max({dims_[0], dims_[1], dims_[2]});
  for (long r = 0; r <= max_r; ++r) {
    for (long iz = c[2] - r; iz <= c[2] + r; ++iz) {
      if (iz < 0 || iz >= dims_[2]) continue;
      for (long iy = c[1] - r; iy <= c[1] + r; ++iy) {
        if (iy < 0 || iy >= dims_[1]) continue;
        const bool shell_yz = (iz == c[2] - r || iz == c[2] + r || iy == c[1] - r ||
                               iy == c[1] + r);
        if (shell_yz) {
          for (long ix = std::max(0L, c[0] - r); ix <= std::min(dims_[0] - 1, c[0] + r); ++ix) {
            consider(ix, iy, iz);
          }
        } else {
          if (c[0] - r >= 0) consider(c[0] - r, iy, iz);
          if (r > 0 && c[0] + r < dims_[0]) consider(c[0] + r, iy, iz);
        }
      }
    }
    // Lower bound on the distance to any point in a cell not yet visited.
    double bound = std::numeric_limits<double>::infinity();
    bool covered = true;
    for (int a = 0; a < 3; ++a) {
      if (c[a] - r > 0) {
        covered = false;
        bound = std::min(bound, q[a] - (origin_[a] + static_cast<double>(c[a] - r) * cell_));
      }
      if (c[a] + r < dims_[a] - 1) {
        covered = false;
        bound = std::min(bound, origin_[a] + static_cast<double>(c[a] + r + 1) * cell_ - q[a]);
      }
    }
    if (covered) break;
    if (heap.size() == k && bound > 0.0) {
      const double safe = bound * (1.0 - 1e-12) - 1e-12 * cell_;
      if (safe > 0.0 && heap.top().d2 < safe * safe) break;
    }
  }

  std::vector<Candidate> best;
  best.reserve(heap.size());
  while (!heap.empty()) {
    best.push_back(heap.top());
    heap.pop();
  }
  std::sort(best.begin(), best.end());
  IndexSelection sel;
  sel.source_size = points_.size();
  for (const auto& b : best) sel.indices.push_back(b.index);
  return sel;
}

std::vector<IndexSelection> knn(std::span<const Vec3> points, std::span<const Vec3> queries,
                                std::size_t k, KnnBackend backend) {
  if (k > points.size()) {
    throw InvalidArgument("knn: k=" + std::to_string(k) + " exceeds N=" +
                          std::to_string(points.size()));
  }
  std::vector<IndexSelection> out(queries.size());
  if (queries.empty()) return out;
  if (backend == KnnBackend::Auto) {
    backend = (points.size() >= 2048 && queries.size() >= 64) ? KnnBackend::Grid
                                                              : KnnBackend::BruteForce;
  }
  if (backend == KnnBackend::Grid && k > 0) {
    const KnnGrid grid(points);
    parallel_for(queries.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) out[i] = grid.query(queries[i], k);
    }, 16);
  } else {
    parallel_for(queries.size(), [&](std::size_t b, std::size_t e) {
      std::vector<Candidate> scratch;
      for (std::size_t i = b; i < e; ++i) out[i] = brute_force_query(points, queries[i], k, scratch);
    }, 16);
  }
  return out;
}

std::vector<IndexSelection> knn(const PointCloud& pc, const PointCloud& queries, std::size_t k,
                                KnnBackend backend) {
  return knn(pc.view(), queries.view(), k, backend);
}

double chamfer_distance(std::span<const Vec3> p, std::span<const Vec3> q) {
  if (p.empty() || q.empty()) throw InvalidArgument("chamfer_distance: empty input");
  auto directed = [](std::span<const Vec3> a, std::span<const Vec3> b) {
    double sum = 0.0;
    for (const auto& x : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : b) best = std::min(best, squared_distance(x, y));
      sum += best;
    }
    return sum / static_cast<double>(a.size());
  };
  return directed(p, q) + directed(q, p);
}

double chamfer_distance(const PointCloud& p, const PointCloud& q) {
  return chamfer_distance(p.view(), q.view());
}

}  // namespace occlume::sampling
