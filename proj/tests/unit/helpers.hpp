#pragma once

#include <random>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/model.hpp"
#include "semap/palette.hpp"
#include "semap/scan.hpp"

namespace semap::test {

inline Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline RigidTransform random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> a(-3.0, 3.0);
  return RigidTransform::from_axis_angle(Vec3(n(rng), n(rng), n(rng)).normalized(), a(rng), random_vec(rng, -5, 5));
}

/// Two-class palette: 0 unlabeled, 1 ground (stuff), 2 thing.
inline Palette tiny_palette() {
  Palette p;
  p.add_class({0, "unlabeled", {0, 0, 0}, false, false});
  p.add_class({1, "ground", {128, 64, 128}, false, false});
  p.add_class({2, "car", {100, 150, 245}, true, false});
  return p;
}

/// Flat scan of a horizontal plane at z = 0 seen from `origin`.
inline LabeledScan plane_scan(const Vec3& origin, int n, double radius, uint64_t seed, int label = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-radius, radius);
  LabeledScan s;
  s.origin = origin;
  s.pose.translation = origin;
  for (int i = 0; i < n; ++i) {
    s.endpoints.emplace_back(origin.x() + u(rng), origin.y() + u(rng), 0.0);
    s.labels.push_back(label);
    s.instances.push_back(0);
  }
  return s;
}

}  // namespace semap::test
