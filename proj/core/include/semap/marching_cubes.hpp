#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "semap/geometry.hpp"

namespace semap {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

/// Regular lattice of `counts` cubes of edge `cube_size` starting at `origin`.
struct CubeLattice {
  Vec3 origin = Vec3::Zero();
  double cube_size = 0.1;
  std::array<int64_t, 3> counts{};
};

/// Fills values[i] for xs[i]; valid[i] = 0 marks a sample without a field value.
using ScalarField = std::function<void(std::span<const Vec3> xs, std::span<double> values, std::span<uint8_t> valid)>;

/// Triangulates {f < iso} boundaries. Cubes touching an invalid corner emit nothing.
/// Triangles wind counter-clockwise seen from the side where f > iso. Shared edge
/// vertices are welded, degenerate triangles (area < 1e-12 m²) dropped. Blocks of
/// `block` cubes per axis are processed independently and stitched in block order.
TriangleMesh marching_cubes(const CubeLattice& lattice, const ScalarField& field, double iso = 0.0, int block = 64);

double triangle_area(const TriangleMesh& mesh, size_t t);
Vec3 triangle_normal(const TriangleMesh& mesh, size_t t);  ///< unit, follows winding

}  // namespace semap
