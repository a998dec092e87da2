#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "semap/geometry.hpp"

namespace semap {

struct Neighbor {
  uint32_t index = 0;
  double distance = 0.0;
};

/// Exact nearest-neighbor queries over a uniform grid of cubic cells. Results equal
/// a brute-force scan, including tie-breaking (lowest point index among equal
/// distances).
class PointIndex {
 public:
  PointIndex() = default;
  PointIndex(std::span<const Vec3> points, double cell_size);

  size_t size() const { return points_.size(); }
  double cell_size() const { return cell_; }
  const Vec3& point(size_t i) const { return points_[i]; }

  std::optional<Neighbor> nearest(const Vec3& q) const;
  /// Up to k neighbors sorted by (distance, index).
  std::vector<Neighbor> knn(const Vec3& q, size_t k) const;
  /// All points with distance <= radius, sorted by index.
  std::vector<uint32_t> radius(const Vec3& q, double radius) const;

 private:
  struct Range {
    uint32_t begin, end;
  };
  std::array<int64_t, 3> cell_of(const Vec3& p) const;
  static uint64_t key(int64_t x, int64_t y, int64_t z);
  template <typename Visit>
  void visit_ring(const std::array<int64_t, 3>& c, int64_t r, Visit&& visit) const;
  std::vector<Neighbor> brute_force(const Vec3& q, size_t k) const;

  double cell_ = 1.0;
  std::vector<Vec3> points_;
  std::vector<uint32_t> order_;  // point ids grouped by cell
  std::unordered_map<uint64_t, Range> cells_;
};

/// O(n) reference scan with the same tie-breaking.
std::optional<Neighbor> brute_force_nearest(std::span<const Vec3> points, const Vec3& q);

}  // namespace semap
