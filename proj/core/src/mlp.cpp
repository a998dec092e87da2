#include "semap/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>

#include "semap/binary_io.hpp"
#include "semap/error.hpp"

namespace semap {
namespace {

void check_trace(const Mlp& mlp, const ForwardTrace& trace) {
  if (trace.owner != &mlp || trace.version != mlp.version()) {
    throw ContractError("mlp: stale forward trace (parameters changed since forward pass)");
  }
  if (trace.activations.size() != mlp.layers().size() + 1) {
    throw ContractError("mlp: trace depth does not match network");
  }
}

Eigen::ArrayXXd relu_mask(const Eigen::MatrixXd& act) {
  return (act.array() > 0.0).cast<double>();
}

}  // namespace

Mlp::Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  int fan_in = in_dim;
  std::vector<int> widths = hidden;
  widths.push_back(out_dim);
  for (int width : widths) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(width, fan_in), Eigen::VectorXd::Zero(width)};
    for (int r = 0; r < width; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = uni(rng);
    }
    layers_.push_back(std::move(layer));
    fan_in = width;
  }
}

Mlp Mlp::from_layers(std::vector<DenseLayer> layers) {
  if (layers.empty()) throw ContractError("mlp: at least one layer required");
  for (size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].weight.rows()) {
      throw ContractError("mlp: bias length does not match weight rows at layer " + std::to_string(l));
    }
    if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows()) {
      throw ContractError("mlp: layer " + std::to_string(l) + " input width does not chain");
    }
  }
  Mlp mlp;
  mlp.layers_ = std::move(layers);
  return mlp;
}

size_t Mlp::parameter_count() const {
  size_t n = 0;
  for (const auto& l : layers_) n += static_cast<size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool Mlp::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

void Mlp::save(std::ostream& os) const {
  binio::write<uint32_t>(os, static_cast<uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    binio::write<uint32_t>(os, static_cast<uint32_t>(l.weight.rows()));
    binio::write<uint32_t>(os, static_cast<uint32_t>(l.weight.cols()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
        binio::write<float>(os, static_cast<float>(l.weight(r, c)));
      }
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) binio::write<float>(os, static_cast<float>(l.bias(r)));
  }
}

Mlp Mlp::load(std::istream& is) {
  const auto count = binio::read<uint32_t>(is, "layer count");
  if (count == 0 || count > 64) throw FormatError("mlp snapshot: implausible layer count");
  std::vector<DenseLayer> layers;
  for (uint32_t l = 0; l < count; ++l) {
    const auto rows = binio::read<uint32_t>(is, "rows");
    const auto cols = binio::read<uint32_t>(is, "cols");
    if (rows == 0 || cols == 0 || rows > 65536 || cols > 65536) {
      throw FormatError("mlp snapshot: implausible layer shape");
    }
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (uint32_t r = 0; r < rows; ++r) {
      for (uint32_t c = 0; c < cols; ++c) layer.weight(r, c) = binio::read<float>(is, "weight");
    }
    for (uint32_t r = 0; r < rows; ++r) layer.bias(r) = binio::read<float>(is, "bias");
    layers.push_back(std::move(layer));
  }
  try {
    return from_layers(std::move(layers));
  } catch (const ContractError& e) {
    throw FormatError(std::string("mlp snapshot: ") + e.what());
  }
}

MlpGradient MlpGradient::zeros_like(const Mlp& mlp) {
  MlpGradient g;
  for (const auto& l : mlp.layers()) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

void MlpGradient::set_zero() {
  for (auto& l : layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
}

void MlpGradient::add_scaled(const MlpGradient& other, double scale) {
  if (other.layers.size() != layers.size()) throw ContractError("mlp gradient: depth mismatch");
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += scale * other.layers[i].weight;
    layers[i].bias += scale * other.layers[i].bias;
  }
}

bool MlpGradient::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

double MlpGradient::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

Eigen::MatrixXd mlp_forward(const Mlp& mlp, const Eigen::MatrixXd& input, ForwardTrace* trace) {
  if (mlp.empty()) throw ContractError("mlp: forward on empty network");
  if (input.rows() != mlp.in_dim()) {
    throw ContractError("mlp: input width " + std::to_string(input.rows()) + " != expected " +
                        std::to_string(mlp.in_dim()));
  }
  const auto& layers = mlp.layers();
  if (trace) {
    trace->owner = &mlp;
    trace->version = mlp.version();
    trace->activations.clear();
    trace->activations.reserve(layers.size() + 1);
    trace->activations.push_back(input);
  }
  Eigen::MatrixXd act = input;
  for (size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weight * act;
    z.colwise() += layers[l].bias;
    if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
    act = std::move(z);
    if (trace) trace->activations.push_back(act);
  }
  return act;
}

Eigen::MatrixXd mlp_backward_accumulate(const Mlp& mlp, const ForwardTrace& trace,
                                        const Eigen::MatrixXd& output_grad, MlpGradient& grads) {
  check_trace(mlp, trace);
  const auto& layers = mlp.layers();
  const auto batch = trace.activations.front().cols();
  if (output_grad.rows() != mlp.out_dim() || output_grad.cols() != batch) {
    throw ContractError("mlp: output gradient shape mismatch");
  }
  if (grads.layers.size() != layers.size()) throw ContractError("mlp: gradient buffer depth mismatch");
  Eigen::MatrixXd delta = output_grad;
  for (size_t li = layers.size(); li-- > 0;) {
    const Eigen::MatrixXd& a = trace.activations[li];
    grads.layers[li].weight.noalias() += delta * a.transpose();
    grads.layers[li].bias += delta.rowwise().sum();
    Eigen::MatrixXd back = layers[li].weight.transpose() * delta;
    if (li > 0) back.array() *= relu_mask(a);
    delta = std::move(back);
  }
  return delta;
}

Eigen::MatrixXd mlp_input_gradient(const Mlp& mlp, const ForwardTrace& trace, const Eigen::MatrixXd& output_grad) {
  check_trace(mlp, trace);
  const auto& layers = mlp.layers();
  if (output_grad.rows() != mlp.out_dim() || output_grad.cols() != trace.activations.front().cols()) {
    throw ContractError("mlp: output gradient shape mismatch");
  }
  Eigen::MatrixXd delta = output_grad;
  for (size_t li = layers.size(); li-- > 0;) {
    Eigen::MatrixXd back = layers[li].weight.transpose() * delta;
    if (li > 0) back.array() *= relu_mask(trace.activations[li]);
    delta = std::move(back);
  }
  return delta;
}

BackwardResult mlp_backward(const Mlp& mlp, const ForwardTrace& trace, const Eigen::MatrixXd& output_grad) {
  BackwardResult r{MlpGradient::zeros_like(mlp), {}};
  r.input_grad = mlp_backward_accumulate(mlp, trace, output_grad, r.grads);
  return r;
}

void mlp_tangent_weight_grad(const Mlp& mlp, const ForwardTrace& trace, const Eigen::MatrixXd& tangent,
                             const Eigen::MatrixXd& upstream, MlpGradient& grads) {
  check_trace(mlp, trace);
  const auto& layers = mlp.layers();
  const auto batch = trace.activations.front().cols();
  if (tangent.rows() != mlp.in_dim() || tangent.cols() != batch) {
    throw ContractError("mlp: tangent shape mismatch");
  }
  if (upstream.rows() != mlp.out_dim() || upstream.cols() != batch) {
    throw ContractError("mlp: tangent upstream shape mismatch");
  }
  // Tangent activations share the primal ReLU masks.
  std::vector<Eigen::MatrixXd> tan(layers.size());
  tan[0] = tangent;
  for (size_t l = 0; l + 1 < layers.size(); ++l) {
    Eigen::MatrixXd t = layers[l].weight * tan[l];
    t.array() *= relu_mask(trace.activations[l + 1]);
    tan[l + 1] = std::move(t);
  }
  Eigen::MatrixXd delta = upstream;
  for (size_t li = layers.size(); li-- > 0;) {
    grads.layers[li].weight.noalias() += delta * tan[li].transpose();
    if (li == 0) break;
    Eigen::MatrixXd back = layers[li].weight.transpose() * delta;
    back.array() *= relu_mask(trace.activations[li]);
    delta = std::move(back);
  }
}

AdamState AdamState::for_mlp(const Mlp& mlp, AdamConfig config) {
  return {config, MlpGradient::zeros_like(mlp), MlpGradient::zeros_like(mlp), 0};
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, int64_t step, const AdamConfig& c) {
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  for (size_t i = 0; i < param.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

void adam_step(Mlp& mlp, const MlpGradient& grads, AdamState& state, std::string_view tensor) {
  if (grads.layers.size() != mlp.layers().size() || state.m.layers.size() != mlp.layers().size()) {
    throw ContractError("adam: gradient/state shapes do not match parameters");
  }
  for (size_t l = 0; l < grads.layers.size(); ++l) {
    if (!grads.layers[l].weight.allFinite() || !grads.layers[l].bias.allFinite()) {
      throw TrainingError("adam: non-finite gradient in " + std::string(tensor) + " layer " +
                          std::to_string(l));
    }
  }
  ++state.step;
  auto& layers = mlp.mutable_layers();
  for (size_t l = 0; l < layers.size(); ++l) {
    auto& p = layers[l];
    const auto& g = grads.layers[l];
    adam_update({p.weight.data(), static_cast<size_t>(p.weight.size())},
                {g.weight.data(), static_cast<size_t>(g.weight.size())},
                {state.m.layers[l].weight.data(), static_cast<size_t>(p.weight.size())},
                {state.v.layers[l].weight.data(), static_cast<size_t>(p.weight.size())}, state.step,
                state.config);
    adam_update({p.bias.data(), static_cast<size_t>(p.bias.size())},
                {g.bias.data(), static_cast<size_t>(g.bias.size())},
                {state.m.layers[l].bias.data(), static_cast<size_t>(p.bias.size())},
                {state.v.layers[l].bias.data(), static_cast<size_t>(p.bias.size())}, state.step,
                state.config);
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

double log_softmax_at(std::span<const double> logits, int index) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  return logits[static_cast<size_t>(index)] - mx - std::log(sum);
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace semap
