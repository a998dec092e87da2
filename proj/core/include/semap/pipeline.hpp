#pragma once

#include <optional>
#include <set>
#include <vector>

#include "semap/config.hpp"
#include "semap/instance_vocab.hpp"
#include "semap/kitti_io.hpp"
#include "semap/mesher.hpp"
#include "semap/palette.hpp"
#include "semap/synth_scene.hpp"
#include "semap/trainer.hpp"

namespace semap {

struct Dataset {
  Palette palette;
  std::vector<LabeledScan> scans;   ///< world frame, or the first scan's frame with submap_frame
  std::vector<int> scan_ids;        ///< index of each scan in the full sequence
  RigidTransform reference_pose;    ///< pose of the first loaded scan
  InstanceVocabulary vocab{64};
  ReadStats stats;
  std::optional<SynthScene> synth;  ///< oracle for synthetic sources (full sequence)
};

/// Palette from the config (file or built-in) with the configured dynamic set.
Palette load_palette(const RunConfig& cfg);

/// Loads scans [first, last] (inclusive, stride applied; -1 = config values) and
/// densifies instance ids.
Dataset load_dataset(const RunConfig& cfg, int first = -1, int last = -1);

/// Thing flag per class id.
std::vector<uint8_t> thing_mask(const Palette& palette);

MapModel build_model(const RunConfig& cfg, const Dataset& data);

/// Config-driven training: dynamic classes are dropped from surface supervision when
/// the filter includes training time.
TrainResult train_model(const RunConfig& cfg, const Dataset& data, MapModel& model, const StepCallback& on_step = {});

/// Extraction and labeling; with a post-hoc filter, dynamic triangles are dropped.
SemanticMesh mesh_model(const RunConfig& cfg, const MapModel& model, const Palette& palette);

}  // namespace semap
