#include "semap/spatial_hash.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semap/error.hpp"

namespace semap {
namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

// Keeps the k best candidates sorted.
struct TopK {
  size_t k;
  std::vector<Neighbor> best;

  void offer(uint32_t index, double d) {
    const Neighbor n{index, d};
    if (best.size() == k && !closer(n, best.back())) return;
    best.insert(std::upper_bound(best.begin(), best.end(), n, closer), n);
    if (best.size() > k) best.pop_back();
  }
  bool full() const { return best.size() == k; }
};

}  // namespace

PointIndex::PointIndex(std::span<const Vec3> points, double cell_size)
    : cell_(cell_size), points_(points.begin(), points.end()) {
  if (!(cell_size > 0.0)) throw ConfigError("spatial index: cell size must be positive");
  std::vector<std::pair<uint64_t, uint32_t>> keyed(points_.size());
  for (uint32_t i = 0; i < points_.size(); ++i) {
    if (!all_finite(points_[i])) throw ContractError("spatial index: non-finite point");
    const auto c = cell_of(points_[i]);
    keyed[i] = {key(c[0], c[1], c[2]), i};
  }
  std::sort(keyed.begin(), keyed.end());
  order_.resize(keyed.size());
  for (size_t i = 0; i < keyed.size(); ++i) {
    order_[i] = keyed[i].second;
    auto [it, inserted] = cells_.try_emplace(keyed[i].first, Range{static_cast<uint32_t>(i), 0});
    it->second.end = static_cast<uint32_t>(i + 1);
  }
}

std::array<int64_t, 3> PointIndex::cell_of(const Vec3& p) const {
  return {static_cast<int64_t>(std::floor(p.x() / cell_)), static_cast<int64_t>(std::floor(p.y() / cell_)),
          static_cast<int64_t>(std::floor(p.z() / cell_))};
}

uint64_t PointIndex::key(int64_t x, int64_t y, int64_t z) {
  // Wrapping only merges distinct cells into one bucket, which adds candidates but
  // never hides one.
  constexpr uint64_t m = (1ULL << 21) - 1;
  return ((static_cast<uint64_t>(x) & m) << 42) | ((static_cast<uint64_t>(y) & m) << 21) | (static_cast<uint64_t>(z) & m);
}

template <typename Visit>
void PointIndex::visit_ring(const std::array<int64_t, 3>& c, int64_t r, Visit&& visit) const {
  for (int64_t dz = -r; dz <= r; ++dz) {
    for (int64_t dy = -r; dy <= r; ++dy) {
      const bool face = std::abs(dz) == r || std::abs(dy) == r;
      for (int64_t dx = -r; dx <= r; dx += (face ? 1 : 2 * r)) {
        auto it = cells_.find(key(c[0] + dx, c[1] + dy, c[2] + dz));
        if (it != cells_.end()) {
          for (uint32_t i = it->second.begin; i < it->second.end; ++i) visit(order_[i]);
        }
        if (r == 0) break;
      }
    }
  }
}

std::vector<Neighbor> PointIndex::brute_force(const Vec3& q, size_t k) const {
  TopK top{k, {}};
  for (uint32_t i = 0; i < points_.size(); ++i) top.offer(i, (points_[i] - q).norm());
  return top.best;
}

std::vector<Neighbor> PointIndex::knn(const Vec3& q, size_t k) const {
  if (k == 0 || points_.empty()) return {};
  k = std::min(k, points_.size());
  TopK top{k, {}};
  const auto c = cell_of(q);
  size_t cells_visited = 0;
  for (int64_t r = 0;; ++r) {
    const int64_t side = 2 * r + 1;
    cells_visited += static_cast<size_t>(r == 0 ? 1 : side * side * side - (side - 2) * (side - 2) * (side - 2));
    if (cells_visited > points_.size() + 27) return brute_force(q, k);
    visit_ring(c, r, [&](uint32_t i) { top.offer(i, (points_[i] - q).norm()); });
    // Every point outside rings 0..r is at least r cells away from q's cell.
    const double bound = static_cast<double>(r) * cell_ * (1.0 - 1e-12);
    if (top.full() && top.best.back().distance < bound) return top.best;
  }
}

std::optional<Neighbor> PointIndex::nearest(const Vec3& q) const {
  const auto r = knn(q, 1);
  if (r.empty()) return std::nullopt;
  return r.front();
}

std::vector<uint32_t> PointIndex::radius(const Vec3& q, double radius) const {
  std::vector<uint32_t> out;
  if (points_.empty() || radius < 0.0) return out;
  const auto lo = cell_of(q - Vec3::Constant(radius));
  const auto hi = cell_of(q + Vec3::Constant(radius));
  const double span = static_cast<double>((hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1)) * static_cast<double>(hi[2] - lo[2] + 1);
  if (span > static_cast<double>(points_.size())) {
    for (uint32_t i = 0; i < points_.size(); ++i) {
      if ((points_[i] - q).norm() <= radius) out.push_back(i);
    }
    return out;
  }
  for (int64_t z = lo[2]; z <= hi[2]; ++z)
    for (int64_t y = lo[1]; y <= hi[1]; ++y)
      for (int64_t x = lo[0]; x <= hi[0]; ++x) {
        auto it = cells_.find(key(x, y, z));
        if (it == cells_.end()) continue;
        for (uint32_t i = it->second.begin; i < it->second.end; ++i) {
          const uint32_t p = order_[i];
          if ((points_[p] - q).norm() <= radius) out.push_back(p);
        }
      }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::optional<Neighbor> brute_force_nearest(std::span<const Vec3> points, const Vec3& q) {
  std::optional<Neighbor> best;
  for (uint32_t i = 0; i < points.size(); ++i) {
    const Neighbor n{i, (points[i] - q).norm()};
    if (!best || closer(n, *best)) best = n;
  }
  return best;
}

}  // namespace semap
