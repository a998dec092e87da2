#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/morton.hpp"

namespace semap {

enum class FeatureTable { geometry, semantic };

/// How per-level interpolated features are combined before decoding.
enum class LevelMerge { concat, sum };

struct GridConfig {
  double leaf_size = 0.2;  ///< finest corner spacing, meters
  int levels = 3;          ///< retained levels, 0 = finest
  int geo_dim = 8;         ///< H1
  int sem_dim = 16;        ///< H2
  double init_std = 0.01;
  uint64_t seed = 0;
  LevelMerge merge = LevelMerge::concat;
};

/// Trilinear stencil of the level-k voxel containing a point.
/// `weight_grads[c]` is the spatial derivative of `weights[c]` (1/m).
struct Stencil {
  int level = 0;
  std::array<int64_t, 8> slots{};  ///< -1 marks an unallocated corner
  std::array<double, 8> weights{};
  std::array<Vec3, 8> weight_grads{};
  bool complete() const;
};

struct CornerBounds {
  std::array<int32_t, 3> min{};
  std::array<int32_t, 3> max{};
  bool empty = true;
};

struct CubeCounts {
  int64_t mx = 0, my = 0, mz = 0;
  friend bool operator==(const CubeCounts&, const CubeCounts&) = default;
};

/// Open-addressed hash from Morton code to corner slot. Exact-key equality; linear probing.
class CornerTable {
 public:
  int64_t find(uint64_t code) const;
  /// Returns (slot, inserted).
  std::pair<int64_t, bool> insert(uint64_t code, int64_t slot);
  size_t size() const { return size_; }

 private:
  static constexpr uint64_t kEmpty = ~0ULL;
  void grow();
  std::vector<uint64_t> keys_;
  std::vector<int64_t> slots_;
  size_t size_ = 0;
};

/// Sparse multi-level grid of trainable corner features. Geometry (H1) and semantic (H2)
/// vectors are allocated jointly, so both tables always share one key set; a corner's
/// slot indexes both feature arrays.
///
/// Const member functions may be called concurrently; allocation and feature writes
/// need exclusive access.
class OctreeFeatureGrid {
 public:
  explicit OctreeFeatureGrid(GridConfig config = {});

  const GridConfig& config() const { return config_; }
  void set_level_merge(LevelMerge merge) { config_.merge = merge; }
  double voxel_size(int level) const;
  int levels() const { return config_.levels; }
  int dim(FeatureTable table) const {
    return table == FeatureTable::geometry ? config_.geo_dim : config_.sem_dim;
  }
  /// Width of the merged decoder input (L·H in concat mode, H in sum mode).
  int merged_dim(FeatureTable table) const;

  /// Ensures the 8 corners of the containing voxel exist at every level.
  /// Returns the number of newly created corners.
  size_t allocate_for_points(std::span<const Vec3> points);

  /// Creates a single corner if missing; returns its slot.
  int64_t allocate_corner(const VoxelKey& key);

  int64_t find(const VoxelKey& key) const;
  VoxelKey key_of(int64_t slot) const;
  size_t corner_count() const { return slot_level_.size(); }
  size_t corner_count(int level) const;
  const CornerBounds& bounds(int level) const { return bounds_.at(level); }
  bool empty() const { return slot_level_.empty(); }

  /// Stencil at a level; corners that are not allocated have slot -1.
  Stencil stencil(const Vec3& x, int level) const;

  std::optional<std::vector<double>> query_level_feature(const Vec3& x, int level,
                                                          FeatureTable table) const;
  /// Level features ordered coarse to fine (L-1 ... 0), concatenated or summed per
  /// config. Absent when the finest level is incomplete; an incomplete coarser level
  /// contributes zeros.
  std::optional<std::vector<double>> query_concat(const Vec3& x, FeatureTable table) const;

  /// Cube counts of the finest-level metric extent at lattice size `cube_size`.
  CubeCounts map_cube_counts(double cube_size) const;
  /// Metric extent of the finest level: (min corner, max corner).
  std::pair<Vec3, Vec3> metric_bounds() const;

  std::span<double> features(FeatureTable table, int64_t slot);
  std::span<const double> features(FeatureTable table, int64_t slot) const;
  std::vector<double>& raw(FeatureTable table) {
    return table == FeatureTable::geometry ? geo_ : sem_;
  }
  const std::vector<double>& raw(FeatureTable table) const {
    return table == FeatureTable::geometry ? geo_ : sem_;
  }

  /// Binary snapshot: "LNSF" header then per-level records, little-endian, f32 features.
  void save(std::ostream& os) const;
  static OctreeFeatureGrid load(std::istream& is, LevelMerge merge = LevelMerge::concat);

 private:
  void init_features(int64_t slot, int level, uint64_t code);

  GridConfig config_;
  std::vector<CornerTable> tables_;
  std::vector<CornerBounds> bounds_;
  std::vector<double> geo_;
  std::vector<double> sem_;
  std::vector<int> slot_level_;
  std::vector<uint64_t> slot_code_;
};

}  // namespace semap
