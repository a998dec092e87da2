#include "semap/pipeline.hpp"

#include <cstdio>
#include <filesystem>

#include "semap/error.hpp"

namespace semap {

Palette load_palette(const RunConfig& cfg) {
  Palette p = cfg.data.palette.empty() ? Palette::semantic_kitti() : Palette::load(cfg.data.palette);
  p.set_dynamic(cfg.dynamic_classes);
  return p;
}

std::vector<uint8_t> thing_mask(const Palette& palette) {
  std::vector<uint8_t> m(static_cast<size_t>(palette.class_count()), 0);
  for (int c = 0; c < palette.class_count(); ++c) m[c] = palette.is_thing(c);
  return m;
}

Dataset load_dataset(const RunConfig& cfg, int first, int last) {
  Dataset d;
  d.palette = load_palette(cfg);
  if (first < 0) first = cfg.data.first_scan;
  if (last < 0) last = cfg.data.last_scan;
  std::vector<LabeledScan> all;

  if (cfg.data.source == DataSource::synth) {
    const SceneSpec spec = SceneSpec::load(cfg.data.scene);
    for (const auto& p : spec.primitives) {
      if (p.class_id < 0 || p.class_id >= d.palette.class_count()) {
        throw ConfigError("scene class " + std::to_string(p.class_id) + " is not in the palette");
      }
    }
    d.synth = synth_scene(spec, cfg.data.scans, cfg.data.rays_per_scan, cfg.seed);
    all = d.synth->scans;
    if (last < 0 || last >= static_cast<int>(all.size())) last = static_cast<int>(all.size()) - 1;
    for (int i = first; i <= last; i += cfg.data.stride) {
      d.scans.push_back(all.at(static_cast<size_t>(i)));
      d.scan_ids.push_back(i);
    }
  } else {
    const auto seq = cfg.data.sequence;
    const auto poses = read_poses(seq / "poses.txt");
    const RigidTransform calib =
        std::filesystem::exists(seq / "calib.txt") ? read_calibration(seq / "calib.txt") : RigidTransform::identity();
    if (last < 0 || last >= static_cast<int>(poses.size())) last = static_cast<int>(poses.size()) - 1;
    for (int i = first; i <= last; i += cfg.data.stride) {
      char name[32];
      std::snprintf(name, sizeof name, "%06d", i);
      const auto bin = seq / "velodyne" / (std::string(name) + ".bin");
      auto label = seq / "labels" / (std::string(name) + ".label");
      if (!std::filesystem::exists(label)) label.clear();
      d.scans.push_back(read_scan(bin, label, poses.at(static_cast<size_t>(i)), calib, d.palette, &d.stats));
      d.scan_ids.push_back(i);
    }
  }
  if (d.scans.empty()) throw ConfigError("data: no scans in the selected range");

  d.reference_pose = d.scans.front().pose;
  if (cfg.data.submap_frame) {
    const RigidTransform to_local = d.reference_pose.inverse();
    for (auto& s : d.scans) {
      for (auto& p : s.endpoints) p = to_local.apply(p);
      s.origin = to_local.apply(s.origin);
      s.pose = to_local * s.pose;
      s.pose.reorthonormalize();
    }
  }
  d.vocab = build_instance_vocab(d.scans, cfg.data.q_max, d.palette);
  apply_instance_vocab(d.scans, d.vocab, d.palette);
  return d;
}

MapModel build_model(const RunConfig& cfg, const Dataset& data) {
  const int instances = is_panoptic(cfg.mode) ? data.vocab.head_width() : 0;
  return MapModel::create(cfg.grid, cfg.decoder, data.palette.class_count(), instances, cfg.train.sigma, cfg.seed);
}

TrainResult train_model(const RunConfig& cfg, const Dataset& data, MapModel& model, const StepCallback& on_step) {
  TrainConfig tc = cfg.train;
  tc.mode = cfg.mode;
  tc.seed = cfg.seed;
  const bool at_training = cfg.dynamic_filter == DynamicFilter::training || cfg.dynamic_filter == DynamicFilter::both;
  tc.dynamic_classes = at_training ? data.palette.dynamic_classes() : std::set<int>{};
  return train(data.scans, model, tc, thing_mask(data.palette), on_step);
}

SemanticMesh mesh_model(const RunConfig& cfg, const MapModel& model, const Palette& palette) {
  SemanticMesh mesh = label_mesh(extract_mesh(model, cfg.s_cube), model, palette);
  const bool posthoc = cfg.dynamic_filter == DynamicFilter::posthoc || cfg.dynamic_filter == DynamicFilter::both;
  if (posthoc) mesh = filter_dynamic(mesh, palette.dynamic_classes(), palette);
  return mesh;
}

}  // namespace semap
