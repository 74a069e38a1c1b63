#include "occlume/occlusion/rig.hpp"

#include <algorithm>
#include <cmath>

#include "occlume/common/error.hpp"

namespace occlume::occlusion {

ViewRig dodecahedron_rig(double radius, const Vec3& up_hint) {
  if (!(radius > 0.0)) throw InvalidArgument("dodecahedron_rig: radius must be > 0");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double inv = 1.0 / phi;

  std::vector<Vec3> unit;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) unit.emplace_back(sx, sy, sz);
  for (int a : {-1, 1}) {
    for (int b : {-1, 1}) {
      unit.emplace_back(0.0, a * inv, b * phi);
      unit.emplace_back(a * inv, b * phi, 0.0);
      unit.emplace_back(a * phi, 0.0, b * inv);
    }
  }
  for (auto& v : unit) v.normalize();
  std::sort(unit.begin(), unit.end(), [](const Vec3& a, const Vec3& b) {
    if (a.z() != b.z()) return a.z() < b.z();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.x() < b.x();
  });

  ViewRig rig;
  rig.radius = radius;
  for (const auto& v : unit) {
    const Vec3 eye = v * radius;
    rig.centers.push_back(eye);
    rig.views.push_back(look_at(eye, Vec3::Zero(), up_hint));
  }
  return rig;
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  throw InvalidArgument("unknown split '" + name + "'");
}

Split split_for_view(std::size_t one_based_view) {
  if (one_based_view == 0) throw InvalidArgument("view indices are 1-based");
  return one_based_view % 2 == 1 ? Split::Train : Split::Test;
}

ViewSplit cross_view_split(const ViewRig& rig) {
  if (rig.size() % 2 != 0) throw InvalidArgument("cross_view_split: odd number of views");
  ViewSplit split;
  for (std::size_t j = 1; j <= rig.size(); ++j) {
    (split_for_view(j) == Split::Train ? split.train : split.test).push_back(j);
  }
  return split;
}

}  // namespace occlume::occlusion
