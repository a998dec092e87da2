#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "semap/model.hpp"
#include "semap/octree_grid.hpp"
#include "semap/trainer.hpp"

namespace semap {

enum class DataSource { synth, kitti };
enum class DynamicFilter { off, training, posthoc, both };

struct DataConfig {
  DataSource source = DataSource::synth;
  std::filesystem::path scene;     ///< synth: scene spec file
  int scans = 10;                  ///< synth: scan count
  int rays_per_scan = 4000;        ///< synth
  std::filesystem::path sequence;  ///< kitti: directory with velodyne/, labels/, poses.txt, calib.txt
  int first_scan = 0;
  int last_scan = -1;              ///< inclusive, -1 = last available
  int stride = 1;
  std::filesystem::path palette;   ///< empty = SemanticKITTI palette
  size_t q_max = 64;
  bool submap_frame = false;       ///< express the map in the first scan's frame
};

/// Complete run configuration. Text form: one "key = value" per line, '#' comments.
struct RunConfig {
  MapMode mode = MapMode::batch_semantic;
  uint64_t seed = 42;
  int threads = 1;
  DataConfig data;
  GridConfig grid;
  DecoderConfig decoder;
  TrainConfig train;
  std::set<int> dynamic_classes;
  DynamicFilter dynamic_filter = DynamicFilter::training;
  double s_cube = 0.1;
  std::vector<double> taus{0.1, 0.2};
  size_t eval_points = 50000;

  /// Parses `text`; unknown keys, malformed values, mode-inconsistent weights and
  /// missing mode-required keys are all collected into one ConfigError.
  /// `mode_override` (e.g. from --mode) replaces the file's mode before defaults apply.
  static RunConfig parse(const std::string& text, const std::optional<MapMode>& mode_override = std::nullopt,
                         const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path, const std::optional<MapMode>& mode_override = std::nullopt);
  /// Resolved configuration in the same text form (every key, sorted).
  std::string dump() const;
  /// All known keys.
  static const std::vector<std::string>& keys();
};

/// Data-root for relative data paths: $SEMAP_DATA_ROOT when set, else `fallback`.
std::filesystem::path data_root(const std::filesystem::path& fallback);

std::string to_string(DataSource s);
std::string to_string(DynamicFilter f);

}  // namespace semap
