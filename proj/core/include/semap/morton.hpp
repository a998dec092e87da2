#pragma once

#include <cstdint>

namespace semap {

/// Integer voxel coordinates at one octree level. Level 0 is the finest.
struct VoxelKey {
  int level = 0;
  int32_t ix = 0;
  int32_t iy = 0;
  int32_t iz = 0;

  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
};

namespace morton {

/// Coordinates must satisfy |c| < kCoordLimit so the offset value fits 21 bits.
inline constexpr int32_t kCoordLimit = 1 << 20;
inline constexpr uint32_t kOffset = 1u << 20;

/// Interleaves offset-shifted coordinates as ...z1 y1 x1 z0 y0 x0 (x in bit 0).
/// Throws RangeError outside the valid box.
uint64_t encode(int32_t ix, int32_t iy, int32_t iz);
inline uint64_t encode(const VoxelKey& k) { return encode(k.ix, k.iy, k.iz); }

struct Coords {
  int32_t ix, iy, iz;
  friend bool operator==(const Coords&, const Coords&) = default;
};

Coords decode(uint64_t code);

}  // namespace morton
}  // namespace semap
