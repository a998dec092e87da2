#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "semap/gradient.hpp"
#include "semap/losses.hpp"
#include "semap/model.hpp"
#include "semap/sampler.hpp"
#include "semap/scan.hpp"

namespace semap {

struct TrainConfig {
  MapMode mode = MapMode::batch_semantic;
  int batch_steps = 2000;       ///< batch modes: optimizer steps over all scans
  int steps_per_scan = 100;     ///< incremental modes: steps per incoming scan
  size_t rays_per_step = 512;
  SamplerConfig sampler;
  uint64_t seed = 42;
  LossWeights weights = LossWeights::defaults_for(MapMode::batch_semantic);
  AdamConfig feature_adam{1e-3, 0.9, 0.99, 1e-8};
  AdamConfig decoder_adam{1e-3, 0.9, 0.99, 1e-8};
  std::set<int> dynamic_classes;  ///< surface samples of these classes are not supervised
  double sigma = 1.0 / 3.0;       ///< panoptic split ratio

  void validate() const;
};

/// Everything the objective needs beyond model and samples.
struct ObjectiveContext {
  MapMode mode = MapMode::batch_semantic;
  LossWeights weights;
  std::vector<uint8_t> thing_classes;  ///< indexed by class id
  const ImportanceStore* importance = nullptr;
};

struct LossTerms {
  double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0, l5 = 0.0, total = 0.0;
  size_t samples = 0;   ///< samples with features (L1)
  size_t surface = 0;   ///< surface-band samples with features (L2)
  size_t labeled = 0;   ///< samples supervising L4
  size_t instanced = 0; ///< samples supervising L5
};

struct LossRecord {
  int64_t step = 0;
  LossTerms terms;
};

/// Composite objective of the mode:
///   L1 + λ2·L2 (+ λ3·L3 incremental) + λ4·L4 (+ λ5·L5 panoptic).
/// Each term is a mean over its eligible samples; samples whose finest-level stencil is
/// incomplete are skipped. With `grad`, adds the gradient of the total; with `l1_grad`,
/// also the gradient of L1 alone (used for importance weights).
LossTerms total_loss(const MapModel& model, std::span<const TrainingSample> batch, const ObjectiveContext& ctx,
                     ModelGradient* grad = nullptr, ModelGradient* l1_grad = nullptr);

/// Analytic ∇ₓ of the SDF decoder (piecewise-linear interpolation weights chained with
/// the decoder input-gradient). Absent outside the map.
std::optional<Vec3> sdf_spatial_gradient(const MapModel& model, const Vec3& x);

/// Mean | ‖∇ₓf‖ − 1 | over points with features; points outside the map are skipped.
double eikonal_loss(const MapModel& model, std::span<const Vec3> xs);

/// Allocates the grid along each ray's surface band (endpoint ± band width), skipping
/// endpoints whose class is in `skip_classes`. Returns new corner count.
size_t allocate_for_scans(OctreeFeatureGrid& grid, std::span<const LabeledScan> scans, double band_width,
                          const std::set<int>& skip_classes = {});

/// Lazy Adam over feature rows: only rows present in a gradient are updated.
struct FeatureAdam {
  AdamConfig config;
  std::vector<double> m_geo, v_geo, m_sem, v_sem;
  int64_t step = 0;

  void apply(OctreeFeatureGrid& grid, const SparseRows& geo_grad, const SparseRows& sem_grad);
};

struct TrainResult {
  std::vector<LossRecord> history;
  ImportanceStore importance;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Optimizes features and decoders. Batch modes draw rays from all scans; incremental
/// modes visit scans in order, accumulating importance and re-snapshotting parameters at
/// each scan boundary. Scans must carry dense instance ids. Throws TrainingError on a
/// non-finite loss or gradient before the offending update is applied, so `model` holds
/// the last good state.
TrainResult train(std::span<const LabeledScan> scans, MapModel& model, const TrainConfig& cfg,
                  const std::vector<uint8_t>& thing_classes, const StepCallback& on_step = {});

/// step,L1,L2,L3,L4,L5,total with round-trip precision.
void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history);

}  // namespace semap
