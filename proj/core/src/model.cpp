#include "semap/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "semap/binary_io.hpp"
#include "semap/error.hpp"

namespace semap {

bool is_incremental(MapMode mode) {
  return mode == MapMode::incremental_semantic || mode == MapMode::incremental_panoptic;
}

bool is_panoptic(MapMode mode) {
  return mode == MapMode::batch_panoptic || mode == MapMode::incremental_panoptic;
}

std::string to_string(MapMode mode) {
  switch (mode) {
    case MapMode::batch_semantic: return "batch-semantic";
    case MapMode::batch_panoptic: return "batch-panoptic";
    case MapMode::incremental_semantic: return "incremental-semantic";
    case MapMode::incremental_panoptic: return "incremental-panoptic";
  }
  return "?";
}

MapMode parse_map_mode(const std::string& name) {
  for (MapMode m : {MapMode::batch_semantic, MapMode::batch_panoptic, MapMode::incremental_semantic,
                    MapMode::incremental_panoptic}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown mapping mode '" + name +
                    "' (expected batch-semantic|batch-panoptic|incremental-semantic|incremental-panoptic)");
}

MapModel MapModel::create(const GridConfig& grid_cfg, const DecoderConfig& dec, int classes,
                          int instance_classes, double sigma, uint64_t seed) {
  if (classes < 2) throw ConfigError("model: need at least 2 classes");
  MapModel m{OctreeFeatureGrid(grid_cfg), {}, {}, {}, 0};
  const std::vector<int> hidden(static_cast<size_t>(dec.hidden_layers), dec.hidden_width);
  const int geo_in = m.grid.merged_dim(FeatureTable::geometry);
  const int sem_in = m.grid.merged_dim(FeatureTable::semantic);
  m.gnf = Mlp(geo_in, hidden, 1, seed ^ 0x11);
  if (instance_classes > 0) {
    if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("model: sigma must be in (0,1)");
    m.semantic_split = static_cast<int>(std::lround(sigma * sem_in));
    if (m.semantic_split < 1 || m.semantic_split >= sem_in) {
      throw ConfigError("model: sigma leaves an empty semantic or instance slice");
    }
    m.snf = Mlp(m.semantic_split, hidden, classes, seed ^ 0x22);
    m.instance_head = Mlp(sem_in - m.semantic_split, hidden, instance_classes, seed ^ 0x33);
  } else {
    m.semantic_split = sem_in;
    m.snf = Mlp(sem_in, hidden, classes, seed ^ 0x22);
  }
  return m;
}

bool MapModel::consistent() const {
  if (gnf.empty() || gnf.out_dim() != 1 || gnf.in_dim() != grid.merged_dim(FeatureTable::geometry)) return false;
  const int sem_in = grid.merged_dim(FeatureTable::semantic);
  if (!snf.empty() && snf.in_dim() != semantic_split) return false;
  if (!instance_head.empty() && instance_head.in_dim() != sem_in - semantic_split) return false;
  if (instance_head.empty() && !snf.empty() && semantic_split != sem_in) return false;
  return true;
}

std::optional<double> MapModel::sdf(const Vec3& x) const {
  double v = 0.0;
  uint8_t ok = 0;
  sdf_batch({&x, 1}, {&v, 1}, {&ok, 1});
  if (!ok) return std::nullopt;
  return v;
}

void MapModel::sdf_batch(std::span<const Vec3> xs, std::span<double> values, std::span<uint8_t> valid) const {
  constexpr size_t kChunk = 2048;
  const int width = grid.merged_dim(FeatureTable::geometry);
  Eigen::MatrixXd input(width, static_cast<Eigen::Index>(kChunk));
  std::vector<size_t> index;
  index.reserve(kChunk);
  for (size_t begin = 0; begin < xs.size(); begin += kChunk) {
    const size_t end = std::min(xs.size(), begin + kChunk);
    index.clear();
    for (size_t i = begin; i < end; ++i) {
      auto f = grid.query_concat(xs[i], FeatureTable::geometry);
      valid[i] = f.has_value();
      values[i] = std::numeric_limits<double>::infinity();
      if (!f) continue;
      const auto col = static_cast<Eigen::Index>(index.size());
      for (int r = 0; r < width; ++r) input(r, col) = (*f)[static_cast<size_t>(r)];
      index.push_back(i);
    }
    if (index.empty()) continue;
    const Eigen::MatrixXd out =
        mlp_forward(gnf, input.leftCols(static_cast<Eigen::Index>(index.size())));
    for (size_t k = 0; k < index.size(); ++k) values[index[k]] = out(0, static_cast<Eigen::Index>(k));
  }
}

void MapModel::save(std::ostream& os) const {
  grid.save(os);
  const uint32_t count = panoptic() ? 3u : (has_semantics() ? 2u : 1u);
  binio::write<uint32_t>(os, count);
  binio::write<uint32_t>(os, static_cast<uint32_t>(semantic_split));
  gnf.save(os);
  if (count >= 2) snf.save(os);
  if (count >= 3) instance_head.save(os);
  if (!os) throw IoError("model: write failed");
}

void MapModel::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("model: cannot open " + path.string() + " for writing");
  save(os);
}

MapModel MapModel::load(std::istream& is) {
  MapModel m{OctreeFeatureGrid::load(is), {}, {}, {}, 0};
  const auto count = binio::read<uint32_t>(is, "decoder count");
  if (count < 1 || count > 3) throw FormatError("model: decoder count must be 1..3");
  m.semantic_split = static_cast<int>(binio::read<uint32_t>(is, "semantic split"));
  m.gnf = Mlp::load(is);
  if (count >= 2) m.snf = Mlp::load(is);
  if (count >= 3) m.instance_head = Mlp::load(is);
  const auto& cfg = m.grid.config();
  if (m.gnf.in_dim() == cfg.geo_dim && cfg.levels > 1) {
    m.grid.set_level_merge(LevelMerge::sum);
  } else if (m.gnf.in_dim() != cfg.levels * cfg.geo_dim) {
    throw FormatError("model: geometry decoder width matches neither concat nor sum merge");
  }
  if (!m.consistent()) throw FormatError("model: decoder widths inconsistent with feature grid");
  return m;
}

MapModel MapModel::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("model: cannot open " + path.string());
  return load(is);
}

}  // namespace semap
