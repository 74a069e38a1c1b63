#pragma once

#include <vector>

#include "occlume/occlusion/camera.hpp"

namespace occlume::occlusion {

/// Fixed set of viewpoints around the origin.
struct ViewRig {
  std::vector<Extrinsics> views;
  std::vector<Vec3> centers;
  double radius = 0.0;

  std::size_t size() const { return views.size(); }
};

/// 20 cameras on the vertices of a regular dodecahedron of circumradius
/// `radius`, all looking at the origin. Views are ordered lexicographically by
/// (z, y, x) of the unit vertex.
ViewRig dodecahedron_rig(double radius, const Vec3& up_hint = Vec3(0.0, 0.0, 1.0));

enum class Split { Train, Test };

const char* split_name(Split s);
Split parse_split(const std::string& name);

/// 1-based view index j: odd j is train, even j is test.
Split split_for_view(std::size_t one_based_view);

/// 1-based view indices of each half.
struct ViewSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

ViewSplit cross_view_split(const ViewRig& rig);

}  // namespace occlume::occlusion
