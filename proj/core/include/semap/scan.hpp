#pragma once

#include <cstdint>
#include <vector>

#include "semap/geometry.hpp"

namespace semap {

/// One posed LiDAR sweep in the world frame.
struct LabeledScan {
  Vec3 origin = Vec3::Zero();
  std::vector<Vec3> endpoints;
  std::vector<int> labels;           ///< train ids in [0, c)
  std::vector<uint32_t> instances;   ///< 0 = stuff / none
  RigidTransform pose;

  size_t size() const { return endpoints.size(); }
  /// Throws ContractError on length mismatch or a non-rigid pose.
  void validate() const;
};

}  // namespace semap
