#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semap/mlp.hpp"
#include "semap/octree_grid.hpp"

namespace semap {

enum class MapMode { batch_semantic, batch_panoptic, incremental_semantic, incremental_panoptic };

bool is_incremental(MapMode mode);
bool is_panoptic(MapMode mode);
std::string to_string(MapMode mode);
/// Throws ConfigError for unknown names.
MapMode parse_map_mode(const std::string& name);

struct DecoderConfig {
  int hidden_width = 32;
  int hidden_layers = 2;
};

/// Feature grid plus the three decoders. The semantic decoder reads the first
/// `semantic_split` coordinates of the merged semantic feature; the instance decoder
/// (panoptic maps only) reads the rest.
struct MapModel {
  OctreeFeatureGrid grid;
  Mlp gnf;            ///< merged geometry feature → SDF
  Mlp snf;            ///< semantic slice → class logits
  Mlp instance_head;  ///< instance slice → instance logits (empty unless panoptic)
  int semantic_split = 0;

  /// `instance_classes` = 0 builds a semantic map; otherwise a panoptic map whose
  /// semantic slice is round(sigma · merged semantic width).
  static MapModel create(const GridConfig& grid, const DecoderConfig& dec, int classes,
                         int instance_classes, double sigma, uint64_t seed);

  bool panoptic() const { return !instance_head.empty(); }
  bool has_semantics() const { return !snf.empty(); }
  int class_count() const { return snf.empty() ? 0 : snf.out_dim(); }
  int instance_count() const { return instance_head.empty() ? 0 : instance_head.out_dim(); }
  /// Decoder widths agree with the grid and the split.
  bool consistent() const;

  /// SDF at x, absent outside the mapped region.
  std::optional<double> sdf(const Vec3& x) const;
  /// Batched SDF; `valid[i]` = 0 where features are absent (value left as +inf).
  void sdf_batch(std::span<const Vec3> xs, std::span<double> values, std::span<uint8_t> valid) const;

  /// Model snapshot: grid block ("LNSF"), then decoder count u32, semantic split u32,
  /// then each decoder block.
  void save(std::ostream& os) const;
  void save(const std::filesystem::path& path) const;
  static MapModel load(std::istream& is);
  static MapModel load(const std::filesystem::path& path);
};

}  // namespace semap
