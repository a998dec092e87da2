#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <vector>

#include "semap/marching_cubes.hpp"
#include "semap/model.hpp"
#include "semap/palette.hpp"

namespace semap {

struct SemanticMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<uint32_t, 3>> triangles;
  std::vector<uint16_t> class_id;
  std::vector<uint16_t> instance_id;
  std::vector<std::array<uint8_t, 3>> rgb;

  size_t vertex_count() const { return vertices.size(); }
  size_t triangle_count() const { return triangles.size(); }
  bool empty() const { return triangles.empty(); }
  /// Throws ContractError on out-of-range indices or mismatched attribute lengths.
  void validate() const;
  TriangleMesh geometry() const { return {vertices, triangles}; }
};

/// Cube lattice of the map: origin at the finest-level lower bound, counts from
/// map_cube_counts.
CubeLattice map_lattice(const OctreeFeatureGrid& grid, double s_cube);

/// Marching cubes over the SDF decoder. Empty map yields an empty mesh.
TriangleMesh extract_mesh(const MapModel& model, double s_cube, double iso = 0.0, int block = 64);

/// Per-vertex class (and instance for panoptic maps) by decoder queries. Vertices
/// without semantic features get class 0.
SemanticMesh label_mesh(const TriangleMesh& mesh, const MapModel& model, const Palette& palette);

/// Labels from a caller-supplied classifier (used for oracle comparisons).
SemanticMesh attach_labels(const TriangleMesh& mesh, std::vector<uint16_t> classes, std::vector<uint16_t> instances,
                           const Palette& palette);

/// Drops triangles whose three vertices all carry a class in `dynamic`, then unused
/// vertices. Throws ConfigError when `dynamic` names a class outside the palette.
SemanticMesh filter_dynamic(const SemanticMesh& mesh, const std::set<int>& dynamic, const Palette& palette);

/// Keeps the triangles with keep[t] != 0 and compacts the vertex arrays.
SemanticMesh select_triangles(const SemanticMesh& mesh, const std::vector<uint8_t>& keep);

}  // namespace semap
