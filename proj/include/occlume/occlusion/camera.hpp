#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "occlume/geomesh/types.hpp"

namespace occlume::occlusion {

using geomesh::PointCloud;
using geomesh::Vec3;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics. Pixel (u, v) of camera point (x, y, z) is
/// (floor(fx*x/z + u0), floor(fy*y/z + v0)).
struct Intrinsics {
  double fx = 100.0;
  double fy = 100.0;
  double u0 = 64.0;
  double v0 = 64.0;
  int width = 128;
  int height = 128;

  void validate() const;
};

/// World-to-camera rigid transform: p_cam = R * p_world + t.
/// Camera axes: +x right, +y down, +z along the viewing direction.
struct Extrinsics {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 to_camera(const Vec3& world) const { return R * world + t; }
  Vec3 to_world(const Vec3& cam) const { return R.transpose() * (cam - t); }
  Vec3 center() const { return -(R.transpose() * t); }
};

/// Per-pixel nearest depth; +inf marks an empty pixel.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h),
        depth(static_cast<std::size_t>(w) * static_cast<std::size_t>(h),
              std::numeric_limits<double>::infinity()) {}

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  bool empty_at(int u, int v) const { return !(at(u, v) < std::numeric_limits<double>::infinity()); }
  std::size_t filled() const;
};

/// Camera at `eye` looking at `target`. When `up_hint` is (nearly) parallel to
/// the viewing axis a fixed fallback axis is used instead.
Extrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint);

/// Z-buffer splat of every point: nearer points win, points behind the camera
/// or outside the image are dropped. Ties within 1e-12 keep the first writer.
DepthMap project_zbuffer(const PointCloud& pc, const Extrinsics& ex, const Intrinsics& ins);

/// Back-project each non-empty pixel through its center (u+0.5, v+0.5) into
/// world coordinates. Output order is row-major over pixels.
PointCloud reconstruct(const DepthMap& dm, const Extrinsics& ex, const Intrinsics& ins);

/// Upper bound on the distance between a point and its back-projected pixel
/// center at depth z.
inline double quantization_bound(double z, const Intrinsics& ins) {
  return z * std::max(1.0 / ins.fx, 1.0 / ins.fy);
}

}  // namespace occlume::occlusion
