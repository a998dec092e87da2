#include "semap/morton.hpp"

#include <cstdlib>
#include <string>

#include "semap/error.hpp"

namespace semap::morton {
namespace {

// Spreads the low 21 bits of v so bit i lands at bit 3i.
uint64_t spread(uint64_t v) {
  v &= 0x1fffffULL;
  v = (v | (v << 32)) & 0x1f00000000ffffULL;
  v = (v | (v << 16)) & 0x1f0000ff0000ffULL;
  v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
  v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
  v = (v | (v << 2)) & 0x1249249249249249ULL;
  return v;
}

uint64_t compact(uint64_t v) {
  v &= 0x1249249249249249ULL;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
  v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
  v = (v ^ (v >> 32)) & 0x1fffffULL;
  return v;
}

void check(int32_t c, const char* axis) {
  if (c <= -kCoordLimit || c >= kCoordLimit) {
    throw RangeError(std::string("morton: ") + axis + " coordinate " + std::to_string(c) +
                     " outside (-2^20, 2^20)");
  }
}

}  // namespace

uint64_t encode(int32_t ix, int32_t iy, int32_t iz) {
  check(ix, "x");
  check(iy, "y");
  check(iz, "z");
  const auto ux = static_cast<uint64_t>(static_cast<int64_t>(ix) + kOffset);
  const auto uy = static_cast<uint64_t>(static_cast<int64_t>(iy) + kOffset);
  const auto uz = static_cast<uint64_t>(static_cast<int64_t>(iz) + kOffset);
  return spread(ux) | (spread(uy) << 1) | (spread(uz) << 2);
}

Coords decode(uint64_t code) {
  const auto off = static_cast<int64_t>(kOffset);
  return {static_cast<int32_t>(static_cast<int64_t>(compact(code)) - off),
          static_cast<int32_t>(static_cast<int64_t>(compact(code >> 1)) - off),
          static_cast<int32_t>(static_cast<int64_t>(compact(code >> 2)) - off)};
}

}  // namespace semap::morton
