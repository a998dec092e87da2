#pragma once

#include <span>
#include <string>
#include <vector>

#include "semap/gradient.hpp"
#include "semap/model.hpp"

namespace semap {

/// Hyperparameters of the composite objective.
struct LossWeights {
  double lambda2 = 0.3;    ///< Eikonal
  double lambda3 = 0.0;    ///< forgetting (incremental modes)
  double lambda4 = 1.0;    ///< semantic
  double lambda5 = 0.0;    ///< instance (panoptic modes)
  double alpha = 0.05;     ///< logistic scale of the SDF loss, meters
  double beta_max = 1000.0;

  static LossWeights defaults_for(MapMode mode);
  /// Throws ConfigError on non-finite/negative weights or weights the mode never uses.
  void validate(MapMode mode) const;
};

/// Binary cross entropy between logistic(pred/alpha) and logistic(d/alpha) for one sample.
/// Logs are clamped at log(1e-12); the clamped branch contributes no gradient.
struct ScalarLoss {
  double value = 0.0;
  double grad = 0.0;  ///< d value / d pred
};
ScalarLoss sdf_bce(double pred, double d, double alpha);

/// Batch-mean BCE.
double sdf_loss(std::span<const double> pred, std::span<const double> d, double alpha);

/// | ‖g‖ − 1 | for one spatial gradient.
double eikonal_value(const Vec3& spatial_grad);

/// −log softmax(logits)[target]; `grad` (same length as logits) receives d/dlogits.
double cross_entropy(std::span<const double> logits, int target, std::span<double> grad = {});
/// Batch-mean cross entropy; logits are rows of a (batch × classes) layout flattened row-major.
double semantic_loss(const std::vector<std::vector<double>>& logits, std::span<const int> targets);

/// Instance target of a sample: stuff classes always map to 0.
int instance_target(bool thing_class, uint32_t dense_instance);

/// Σ βᵢ (liveᵢ − prevᵢ)² over one flat tensor.
double weighted_drift(std::span<const double> beta, std::span<const double> live, std::span<const double> prev);

/// Per-parameter importance and the parameter snapshot from the last scan boundary.
/// Feature tensors may grow with the grid (new entries get β = 0 and prev = live);
/// decoder shapes must stay fixed.
struct ImportanceStore {
  struct Tensor {
    std::vector<double> beta;       ///< importance used by the penalty
    std::vector<double> beta_next;  ///< running importance including the current scan
    std::vector<double> prev;       ///< parameter snapshot
  };
  Tensor geo, sem, gnf, snf, instance;
  bool initialized = false;

  static ImportanceStore create(const MapModel& model);
  /// Extends feature tensors after allocation. Throws ContractError on decoder drift
  /// or shrinking tensors.
  void sync_shapes(const MapModel& model);
  /// βᵢ ← min(βᵢ + |gᵢ|, β_max) on the running importance.
  void update_importance(const ModelGradient& l1_grad, double beta_max, const MapModel& model);
  /// Scan boundary: running importance becomes active and the snapshot is retaken.
  void commit(const MapModel& model);
};

/// Flattened decoder parameters (per layer: weights column-major, then bias).
std::vector<double> flatten(const Mlp& mlp);
std::vector<double> flatten(const MlpGradient& grad);

/// Σ βᵢ (ηᵗᵢ − ηᵗ⁻¹ᵢ)² over features and decoders. With `grad` non-null, adds
/// `scale`·∂/∂η into it.
double forgetting_loss(const MapModel& model, const ImportanceStore& store, ModelGradient* grad = nullptr,
                       double scale = 1.0);

}  // namespace semap
