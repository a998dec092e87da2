#include "semap/octree_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "semap/binary_io.hpp"
#include "semap/error.hpp"

namespace semap {
namespace {

uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool in_morton_range(int64_t c) {
  return c > -morton::kCoordLimit && c < morton::kCoordLimit;
}

constexpr char kMagic[4] = {'L', 'N', 'S', 'F'};
constexpr uint32_t kVersion = 1;

}  // namespace

bool Stencil::complete() const {
  return std::all_of(slots.begin(), slots.end(), [](int64_t s) { return s >= 0; });
}

int64_t CornerTable::find(uint64_t code) const {
  if (keys_.empty()) return -1;
  const size_t mask = keys_.size() - 1;
  for (size_t i = mix64(code) & mask;; i = (i + 1) & mask) {
    if (keys_[i] == code) return slots_[i];
    if (keys_[i] == kEmpty) return -1;
  }
}

std::pair<int64_t, bool> CornerTable::insert(uint64_t code, int64_t slot) {
  if ((size_ + 1) * 2 > keys_.size()) grow();
  const size_t mask = keys_.size() - 1;
  for (size_t i = mix64(code) & mask;; i = (i + 1) & mask) {
    if (keys_[i] == code) return {slots_[i], false};
    if (keys_[i] == kEmpty) {
      keys_[i] = code;
      slots_[i] = slot;
      ++size_;
      return {slot, true};
    }
  }
}

void CornerTable::grow() {
  std::vector<uint64_t> old_keys = std::move(keys_);
  std::vector<int64_t> old_slots = std::move(slots_);
  const size_t cap = old_keys.empty() ? 1024 : old_keys.size() * 2;
  keys_.assign(cap, kEmpty);
  slots_.assign(cap, -1);
  const size_t mask = cap - 1;
  for (size_t j = 0; j < old_keys.size(); ++j) {
    if (old_keys[j] == kEmpty) continue;
    size_t i = mix64(old_keys[j]) & mask;
    while (keys_[i] != kEmpty) i = (i + 1) & mask;
    keys_[i] = old_keys[j];
    slots_[i] = old_slots[j];
  }
}

OctreeFeatureGrid::OctreeFeatureGrid(GridConfig config) : config_(config) {
  if (config_.levels < 1 || config_.levels > 16) throw ConfigError("grid: levels must be in [1,16]");
  if (!(config_.leaf_size > 0.0)) throw ConfigError("grid: leaf_size must be positive");
  if (config_.geo_dim < 1 || config_.sem_dim < 1) throw ConfigError("grid: feature dims must be >= 1");
  tables_.resize(config_.levels);
  bounds_.resize(config_.levels);
}

double OctreeFeatureGrid::voxel_size(int level) const {
  return config_.leaf_size * std::ldexp(1.0, level);
}

int OctreeFeatureGrid::merged_dim(FeatureTable table) const {
  return config_.merge == LevelMerge::concat ? config_.levels * dim(table) : dim(table);
}

size_t OctreeFeatureGrid::corner_count(int level) const { return tables_.at(level).size(); }

int64_t OctreeFeatureGrid::find(const VoxelKey& key) const {
  if (key.level < 0 || key.level >= config_.levels) return -1;
  if (!in_morton_range(key.ix) || !in_morton_range(key.iy) || !in_morton_range(key.iz)) return -1;
  return tables_[key.level].find(morton::encode(key));
}

VoxelKey OctreeFeatureGrid::key_of(int64_t slot) const {
  const auto c = morton::decode(slot_code_.at(slot));
  return {slot_level_[slot], c.ix, c.iy, c.iz};
}

void OctreeFeatureGrid::init_features(int64_t slot, int level, uint64_t code) {
  // Seeded per corner so initial values do not depend on allocation order.
  std::mt19937_64 rng(mix64(config_.seed ^ mix64(code + (static_cast<uint64_t>(level) << 60))));
  std::normal_distribution<double> gauss(0.0, config_.init_std);
  const auto h1 = static_cast<size_t>(config_.geo_dim);
  const auto h2 = static_cast<size_t>(config_.sem_dim);
  for (size_t i = 0; i < h1; ++i) geo_[slot * h1 + i] = gauss(rng);
  for (size_t i = 0; i < h2; ++i) sem_[slot * h2 + i] = gauss(rng);
}

int64_t OctreeFeatureGrid::allocate_corner(const VoxelKey& key) {
  if (key.level < 0 || key.level >= config_.levels) {
    throw RangeError("grid: level " + std::to_string(key.level) + " not retained");
  }
  const uint64_t code = morton::encode(key);
  const auto next = static_cast<int64_t>(slot_level_.size());
  auto [slot, inserted] = tables_[key.level].insert(code, next);
  if (!inserted) return slot;
  slot_level_.push_back(key.level);
  slot_code_.push_back(code);
  geo_.resize(geo_.size() + config_.geo_dim);
  sem_.resize(sem_.size() + config_.sem_dim);
  init_features(slot, key.level, code);
  CornerBounds& b = bounds_[key.level];
  const std::array<int32_t, 3> c{key.ix, key.iy, key.iz};
  for (int a = 0; a < 3; ++a) {
    b.min[a] = b.empty ? c[a] : std::min(b.min[a], c[a]);
    b.max[a] = b.empty ? c[a] : std::max(b.max[a], c[a]);
  }
  b.empty = false;
  return slot;
}

size_t OctreeFeatureGrid::allocate_for_points(std::span<const Vec3> points) {
  size_t created = 0;
  for (const Vec3& p : points) {
    if (!p.allFinite()) throw RangeError("grid: non-finite point in allocation");
    for (int level = 0; level < config_.levels; ++level) {
      const double s = voxel_size(level);
      const auto bx = static_cast<int64_t>(std::floor(p.x() / s));
      const auto by = static_cast<int64_t>(std::floor(p.y() / s));
      const auto bz = static_cast<int64_t>(std::floor(p.z() / s));
      for (int c = 0; c < 8; ++c) {
        const int64_t cx = bx + (c & 1), cy = by + ((c >> 1) & 1), cz = bz + ((c >> 2) & 1);
        if (!in_morton_range(cx) || !in_morton_range(cy) || !in_morton_range(cz)) {
          throw RangeError("grid: point outside addressable map extent");
        }
        const size_t before = slot_level_.size();
        allocate_corner({level, static_cast<int32_t>(cx), static_cast<int32_t>(cy),
                         static_cast<int32_t>(cz)});
        created += slot_level_.size() - before;
      }
    }
  }
  return created;
}

Stencil OctreeFeatureGrid::stencil(const Vec3& x, int level) const {
  Stencil st;
  st.level = level;
  const double s = voxel_size(level);
  const Vec3 u = x / s;
  const double fx = std::floor(u.x()), fy = std::floor(u.y()), fz = std::floor(u.z());
  const double tx = u.x() - fx, ty = u.y() - fy, tz = u.z() - fz;
  const auto bx = static_cast<int64_t>(fx), by = static_cast<int64_t>(fy),
             bz = static_cast<int64_t>(fz);
  const double inv = 1.0 / s;
  for (int c = 0; c < 8; ++c) {
    const int a = c & 1, b = (c >> 1) & 1, d = (c >> 2) & 1;
    const double wx = a ? tx : 1.0 - tx;
    const double wy = b ? ty : 1.0 - ty;
    const double wz = d ? tz : 1.0 - tz;
    const double sx = a ? inv : -inv, sy = b ? inv : -inv, sz = d ? inv : -inv;
    st.weights[c] = wx * wy * wz;
    st.weight_grads[c] = Vec3(sx * wy * wz, wx * sy * wz, wx * wy * sz);
    const int64_t cx = bx + a, cy = by + b, cz = bz + d;
    if (in_morton_range(cx) && in_morton_range(cy) && in_morton_range(cz)) {
      st.slots[c] = tables_[level].find(morton::encode(static_cast<int32_t>(cx),
                                                       static_cast<int32_t>(cy),
                                                       static_cast<int32_t>(cz)));
    } else {
      st.slots[c] = -1;
    }
  }
  return st;
}

std::optional<std::vector<double>> OctreeFeatureGrid::query_level_feature(
    const Vec3& x, int level, FeatureTable table) const {
  if (level < 0 || level >= config_.levels) return std::nullopt;
  const Stencil st = stencil(x, level);
  if (!st.complete()) return std::nullopt;
  const int h = dim(table);
  std::vector<double> out(h, 0.0);
  for (int c = 0; c < 8; ++c) {
    const auto f = features(table, st.slots[c]);
    for (int i = 0; i < h; ++i) out[i] += st.weights[c] * f[i];
  }
  return out;
}

std::optional<std::vector<double>> OctreeFeatureGrid::query_concat(const Vec3& x,
                                                                   FeatureTable table) const {
  auto finest = query_level_feature(x, 0, table);
  if (!finest) return std::nullopt;
  const int h = dim(table);
  const int levels = config_.levels;
  std::vector<double> out(merged_dim(table), 0.0);
  for (int level = levels - 1; level >= 0; --level) {
    auto f = level == 0 ? finest : query_level_feature(x, level, table);
    if (!f) continue;
    const int offset = config_.merge == LevelMerge::concat ? (levels - 1 - level) * h : 0;
    for (int i = 0; i < h; ++i) out[offset + i] += (*f)[i];
  }
  return out;
}

std::pair<Vec3, Vec3> OctreeFeatureGrid::metric_bounds() const {
  const CornerBounds& b = bounds_.at(0);
  if (b.empty) throw EmptyMapError("grid: map is empty");
  const double s = config_.leaf_size;
  return {Vec3(b.min[0], b.min[1], b.min[2]) * s, Vec3(b.max[0], b.max[1], b.max[2]) * s};
}

CubeCounts OctreeFeatureGrid::map_cube_counts(double cube_size) const {
  if (!(cube_size > 0.0)) throw ConfigError("grid: cube size must be positive");
  const CornerBounds& b = bounds_.at(0);
  if (b.empty) throw EmptyMapError("grid: map is empty");
  auto count = [&](int a) {
    const double span = static_cast<double>(b.max[a] - b.min[a]) * config_.leaf_size;
    // Tolerance absorbs representation error in span/cube_size (e.g. 10/0.1).
    return static_cast<int64_t>(std::ceil(span / cube_size - 1e-9));
  };
  return {count(0), count(1), count(2)};
}

std::span<double> OctreeFeatureGrid::features(FeatureTable table, int64_t slot) {
  const auto h = static_cast<size_t>(dim(table));
  return {raw(table).data() + static_cast<size_t>(slot) * h, h};
}

std::span<const double> OctreeFeatureGrid::features(FeatureTable table, int64_t slot) const {
  const auto h = static_cast<size_t>(dim(table));
  return {raw(table).data() + static_cast<size_t>(slot) * h, h};
}

void OctreeFeatureGrid::save(std::ostream& os) const {
  os.write(kMagic, 4);
  binio::write<uint32_t>(os, kVersion);
  binio::write<double>(os, config_.leaf_size);
  binio::write<uint32_t>(os, static_cast<uint32_t>(config_.levels));
  binio::write<uint32_t>(os, static_cast<uint32_t>(config_.geo_dim));
  binio::write<uint32_t>(os, static_cast<uint32_t>(config_.sem_dim));
  for (int level = 0; level < config_.levels; ++level) {
    std::vector<std::pair<uint64_t, int64_t>> entries;
    for (size_t s = 0; s < slot_level_.size(); ++s) {
      if (slot_level_[s] == level) entries.emplace_back(slot_code_[s], static_cast<int64_t>(s));
    }
    std::sort(entries.begin(), entries.end());
    binio::write<uint64_t>(os, entries.size());
    for (const auto& [code, slot] : entries) {
      binio::write<uint64_t>(os, code);
      for (double v : features(FeatureTable::geometry, slot)) {
        binio::write<float>(os, static_cast<float>(v));
      }
      for (double v : features(FeatureTable::semantic, slot)) {
        binio::write<float>(os, static_cast<float>(v));
      }
    }
  }
  if (!os) throw IoError("grid: write failed");
}

OctreeFeatureGrid OctreeFeatureGrid::load(std::istream& is, LevelMerge merge) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("grid snapshot: bad magic (expected LNSF)");
  }
  const auto version = binio::read<uint32_t>(is, "version");
  if (version != kVersion) {
    throw FormatError("grid snapshot: unsupported version " + std::to_string(version));
  }
  GridConfig cfg;
  cfg.leaf_size = binio::read<double>(is, "s_leaf");
  cfg.levels = static_cast<int>(binio::read<uint32_t>(is, "L"));
  cfg.geo_dim = static_cast<int>(binio::read<uint32_t>(is, "H1"));
  cfg.sem_dim = static_cast<int>(binio::read<uint32_t>(is, "H2"));
  cfg.merge = merge;
  OctreeFeatureGrid grid(cfg);
  for (int level = 0; level < cfg.levels; ++level) {
    const auto n = binio::read<uint64_t>(is, "entry count");
    for (uint64_t e = 0; e < n; ++e) {
      const auto code = binio::read<uint64_t>(is, "code");
      const auto c = morton::decode(code);
      const int64_t slot = grid.allocate_corner({level, c.ix, c.iy, c.iz});
      for (double& v : grid.features(FeatureTable::geometry, slot)) {
        v = binio::read<float>(is, "geometry feature");
      }
      for (double& v : grid.features(FeatureTable::semantic, slot)) {
        v = binio::read<float>(is, "semantic feature");
      }
    }
  }
  return grid;
}

}  // namespace semap
