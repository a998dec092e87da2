#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace semap {

struct DenseLayer {
  Eigen::MatrixXd weight;  ///< out × in
  Eigen::VectorXd bias;    ///< out
};

/// Fully connected decoder: ReLU hidden layers, linear output head.
/// Inputs and outputs are batched column-wise (features × batch).
class Mlp {
 public:
  Mlp() = default;
  /// Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases.
  Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, uint64_t seed);
  /// Throws ContractError unless consecutive shapes chain.
  static Mlp from_layers(std::vector<DenseLayer> layers);

  int in_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
  int out_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }
  int hidden_layers() const { return static_cast<int>(layers_.size()) - 1; }
  bool empty() const { return layers_.empty(); }
  size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  /// Mutable access invalidates outstanding forward traces.
  std::vector<DenseLayer>& mutable_layers() {
    ++version_;
    return layers_;
  }
  uint64_t version() const { return version_; }
  bool all_finite() const;

  /// Snapshot block: layer count u32, then per layer rows u32, cols u32,
  /// row-major f32 weights, f32 biases.
  void save(std::ostream& os) const;
  static Mlp load(std::istream& is);

 private:
  std::vector<DenseLayer> layers_;
  uint64_t version_ = 0;
};

/// Activations kept for one batched forward pass.
struct ForwardTrace {
  uint64_t version = 0;
  const Mlp* owner = nullptr;
  std::vector<Eigen::MatrixXd> activations;  ///< [0] = input, [l+1] = output of layer l
};

/// Gradient buffers shaped like an Mlp.
struct MlpGradient {
  std::vector<DenseLayer> layers;

  static MlpGradient zeros_like(const Mlp& mlp);
  void set_zero();
  void add_scaled(const MlpGradient& other, double scale);
  bool all_finite() const;
  double squared_norm() const;
};

Eigen::MatrixXd mlp_forward(const Mlp& mlp, const Eigen::MatrixXd& input, ForwardTrace* trace = nullptr);

struct BackwardResult {
  MlpGradient grads;
  Eigen::MatrixXd input_grad;  ///< in × batch
};

/// Exact gradients of the traced computation given dL/doutput (out × batch).
BackwardResult mlp_backward(const Mlp& mlp, const ForwardTrace& trace, const Eigen::MatrixXd& output_grad);

/// Same as mlp_backward but accumulates parameter gradients into `grads`.
/// Returns dL/dinput.
Eigen::MatrixXd mlp_backward_accumulate(const Mlp& mlp, const ForwardTrace& trace,
                                        const Eigen::MatrixXd& output_grad, MlpGradient& grads);

/// dL/dinput only, skipping parameter gradients.
Eigen::MatrixXd mlp_input_gradient(const Mlp& mlp, const ForwardTrace& trace, const Eigen::MatrixXd& output_grad);

/// Gradient w.r.t. the weights of the directional derivative vᵀ·∂y/∂input, with the
/// ReLU masks of `trace` held fixed (biases receive nothing). `tangent` is in × batch,
/// `upstream` is out × batch. Accumulates into `grads`. This is the parameter gradient
/// of any loss that depends on the network only through its input-gradient.
void mlp_tangent_weight_grad(const Mlp& mlp, const ForwardTrace& trace, const Eigen::MatrixXd& tangent,
                             const Eigen::MatrixXd& upstream, MlpGradient& grads);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// First/second moments mirroring an Mlp.
struct AdamState {
  AdamConfig config;
  MlpGradient m;
  MlpGradient v;
  int64_t step = 0;

  static AdamState for_mlp(const Mlp& mlp, AdamConfig config);
};

/// Bias-corrected Adam update. Throws TrainingError naming `tensor` if any gradient
/// entry is non-finite; parameters are left untouched in that case.
void adam_step(Mlp& mlp, const MlpGradient& grads, AdamState& state, std::string_view tensor = "mlp");

/// Element-wise Adam update on a flat parameter block with an externally owned step count.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, int64_t step, const AdamConfig& config);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);
/// log softmax(logits)[index], computed stably.
double log_softmax_at(std::span<const double> logits, int index);
/// Lowest index among the maxima.
int argmax(std::span<const double> values);

}  // namespace semap
