#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace occlume::geomesh {

using Vec3 = Eigen::Vector3d;

/// Indexed triangle mesh.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;

  /// Throws InvalidArgument when an index is out of range or repeated.
  void validate() const;
};

/// Ordered set of 3D points with an optional class id.
struct PointCloud {
  std::vector<Vec3> points;
  std::optional<int> label;

  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> pts, std::optional<int> lbl = std::nullopt)
      : points(std::move(pts)), label(lbl) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  std::span<const Vec3> view() const { return points; }
};

/// Ordered class names with contiguous ids starting at 0.
class ClassCatalog {
 public:
  ClassCatalog() = default;
  /// Names must be unique; ids follow the given order.
  explicit ClassCatalog(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::string& name(int id) const;
  int id(const std::string& name) const;
  bool contains(const std::string& name) const { return ids_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> ids_;
};

}  // namespace occlume::geomesh
