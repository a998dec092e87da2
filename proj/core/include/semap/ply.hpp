#pragma once

#include <filesystem>
#include <vector>

#include "semap/mesher.hpp"

namespace semap {

struct LabeledPoints {
  std::vector<Vec3> points;
  std::vector<uint16_t> class_id;
  std::vector<uint16_t> instance_id;

  size_t size() const { return points.size(); }
};

/// Binary little-endian PLY: vertex x,y,z float32, red,green,blue uint8, class_id
/// uint16, instance_id uint16; face list uint8 count / uint32 indices.
void write_ply(const std::filesystem::path& path, const SemanticMesh& mesh);
/// Reads the layout above. Vertex properties may appear in any order and with any
/// scalar PLY type; missing labels default to 0, missing color to black.
SemanticMesh read_ply(const std::filesystem::path& path);

/// Vertex-only PLY with x,y,z float32, class_id and instance_id uint16.
void write_point_ply(const std::filesystem::path& path, const LabeledPoints& points);
LabeledPoints read_point_ply(const std::filesystem::path& path);

}  // namespace semap
