#include "occlume/occlusion/camera.hpp"

#include <cmath>

#include "occlume/common/error.hpp"

namespace occlume::occlusion {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("intrinsics: focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw InvalidArgument("intrinsics: empty image");
  if (!(u0 > 0.0 && u0 < width) || !(v0 > 0.0 && v0 < height)) {
    throw InvalidArgument("intrinsics: principal point outside the image");
  }
}

std::size_t DepthMap::filled() const {
  std::size_t n = 0;
  for (double d : depth) n += d < std::numeric_limits<double>::infinity() ? 1 : 0;
  return n;
}

Extrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint) {
  const Vec3 axis = target - eye;
  const double len = axis.norm();
  if (!(len > 0.0)) throw InvalidArgument("look_at: eye coincides with target");
  const Vec3 z = axis / len;

  auto orthogonal_up = [&](const Vec3& up) -> Vec3 { return up - up.dot(z) * z; };
  Vec3 up = orthogonal_up(up_hint);
  if (up.norm() < 1e-6 * std::max(1.0, up_hint.norm())) {
    up = orthogonal_up(Vec3::UnitZ());
    if (up.norm() < 1e-6) up = orthogonal_up(Vec3::UnitY());
  }
  const Vec3 y = -up.normalized();  // image rows grow downward
  const Vec3 x = y.cross(z);

  Extrinsics ex;
  ex.R.row(0) = x.transpose();
  ex.R.row(1) = y.transpose();
  ex.R.row(2) = z.transpose();
  ex.t = -(ex.R * eye);
  return ex;
}

DepthMap project_zbuffer(const PointCloud& pc, const Extrinsics& ex, const Intrinsics& ins) {
  ins.validate();
  DepthMap dm(ins.width, ins.height);
  for (const auto& p : pc.points) {
    const Vec3 c = ex.to_camera(p);
    if (!(c.z() > 0.0)) continue;
    const double fu = std::floor(ins.fx * c.x() / c.z() + ins.u0);
    const double fv = std::floor(ins.fy * c.y() / c.z() + ins.v0);
    if (!(fu >= 0.0 && fu < ins.width && fv >= 0.0 && fv < ins.height)) continue;
    double& slot = dm.depth[static_cast<std::size_t>(fv) * static_cast<std::size_t>(ins.width) +
                            static_cast<std::size_t>(fu)];
    if (c.z() < slot - 1e-12) slot = c.z();
  }
  return dm;
}

PointCloud reconstruct(const DepthMap& dm, const Extrinsics& ex, const Intrinsics& ins) {
  PointCloud pc;
  for (int v = 0; v < dm.height; ++v) {
    for (int u = 0; u < dm.width; ++u) {
      if (dm.empty_at(u, v)) continue;
      const double z = dm.at(u, v);
      const Vec3 cam((u + 0.5 - ins.u0) * z / ins.fx, (v + 0.5 - ins.v0) * z / ins.fy, z);
      pc.points.push_back(ex.to_world(cam));
    }
  }
  return pc;
}

}  // namespace occlume::occlusion
