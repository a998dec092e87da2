#include "semap/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semap/error.hpp"

namespace semap {
namespace {

const double kLogFloor = std::log(1e-12);

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void append_flat(const DenseLayer& l, std::vector<double>& out) {
  out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
  out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
}

void add_flat_to(MlpGradient& g, std::span<const double> flat) {
  size_t k = 0;
  for (auto& l : g.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] += flat[k++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] += flat[k++];
  }
}

void resize_tensor(ImportanceStore::Tensor& t, std::span<const double> live, const char* name, bool growable) {
  if (t.prev.size() == live.size()) return;
  if (!growable || live.size() < t.prev.size()) {
    throw ContractError(std::string("importance: shape drift in tensor ") + name);
  }
  const size_t old = t.prev.size();
  t.prev.insert(t.prev.end(), live.begin() + static_cast<std::ptrdiff_t>(old), live.end());
  t.beta.resize(live.size(), 0.0);
  t.beta_next.resize(live.size(), 0.0);
}

void init_tensor(ImportanceStore::Tensor& t, std::span<const double> live) {
  t.prev.assign(live.begin(), live.end());
  t.beta.assign(live.size(), 0.0);
  t.beta_next.assign(live.size(), 0.0);
}

void accumulate_dense(ImportanceStore::Tensor& t, std::span<const double> grad, double beta_max) {
  for (size_t i = 0; i < grad.size(); ++i) {
    t.beta_next[i] = std::min(t.beta_next[i] + std::abs(grad[i]), beta_max);
  }
}

void accumulate_sparse(ImportanceStore::Tensor& t, const SparseRows& rows, double beta_max) {
  const auto w = static_cast<size_t>(rows.width());
  for (size_t r = 0; r < rows.size(); ++r) {
    const auto row = rows.row_at(r);
    const size_t base = static_cast<size_t>(rows.slot(r)) * w;
    for (size_t i = 0; i < w; ++i) {
      t.beta_next[base + i] = std::min(t.beta_next[base + i] + std::abs(row[i]), beta_max);
    }
  }
}

double drift_dense(const ImportanceStore::Tensor& t, std::span<const double> live, std::vector<double>* grad,
                   double scale) {
  double sum = 0.0;
  if (grad) grad->assign(live.size(), 0.0);
  for (size_t i = 0; i < live.size(); ++i) {
    if (t.beta[i] == 0.0) continue;
    const double delta = live[i] - t.prev[i];
    sum += t.beta[i] * delta * delta;
    if (grad) (*grad)[i] = scale * 2.0 * t.beta[i] * delta;
  }
  return sum;
}

double drift_features(const ImportanceStore::Tensor& t, std::span<const double> live, int width,
                      SparseRows* grad, double scale) {
  double sum = 0.0;
  const auto w = static_cast<size_t>(width);
  const size_t slots = live.size() / w;
  for (size_t s = 0; s < slots; ++s) {
    double* row = nullptr;
    for (size_t i = 0; i < w; ++i) {
      const size_t k = s * w + i;
      if (t.beta[k] == 0.0) continue;
      const double delta = live[k] - t.prev[k];
      if (delta == 0.0) continue;
      sum += t.beta[k] * delta * delta;
      if (grad) {
        if (!row) row = grad->row(static_cast<int64_t>(s)).data();
        row[i] += scale * 2.0 * t.beta[k] * delta;
      }
    }
  }
  return sum;
}

}  // namespace

std::span<double> SparseRows::row(int64_t slot) {
  auto [it, inserted] = index_.try_emplace(slot, slots_.size());
  if (inserted) {
    slots_.push_back(slot);
    values_.resize(values_.size() + static_cast<size_t>(width_), 0.0);
  }
  return row_at(it->second);
}

const double* SparseRows::find(int64_t slot) const {
  auto it = index_.find(slot);
  return it == index_.end() ? nullptr : values_.data() + it->second * static_cast<size_t>(width_);
}

void SparseRows::add_scaled(const SparseRows& other, double scale) {
  if (other.width_ != width_) throw ContractError("sparse rows: width mismatch");
  for (size_t r = 0; r < other.size(); ++r) {
    auto dst = row(other.slot(r));
    const auto src = other.row_at(r);
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

void SparseRows::clear() {
  slots_.clear();
  values_.clear();
  index_.clear();
}

bool SparseRows::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ModelGradient ModelGradient::zeros_like(const MapModel& model) {
  ModelGradient g;
  g.gnf = MlpGradient::zeros_like(model.gnf);
  if (!model.snf.empty()) g.snf = MlpGradient::zeros_like(model.snf);
  if (!model.instance_head.empty()) g.instance = MlpGradient::zeros_like(model.instance_head);
  g.geo = SparseRows(model.grid.dim(FeatureTable::geometry));
  g.sem = SparseRows(model.grid.dim(FeatureTable::semantic));
  return g;
}

void ModelGradient::add_scaled(const ModelGradient& other, double scale) {
  gnf.add_scaled(other.gnf, scale);
  snf.add_scaled(other.snf, scale);
  instance.add_scaled(other.instance, scale);
  geo.add_scaled(other.geo, scale);
  sem.add_scaled(other.sem, scale);
}

void ModelGradient::clear() {
  gnf.set_zero();
  snf.set_zero();
  instance.set_zero();
  geo.clear();
  sem.clear();
}

std::string ModelGradient::first_non_finite() const {
  if (!gnf.all_finite()) return "gnf";
  if (!snf.all_finite()) return "snf";
  if (!instance.all_finite()) return "instance_head";
  if (!geo.all_finite()) return "geometry_features";
  if (!sem.all_finite()) return "semantic_features";
  return {};
}

LossWeights LossWeights::defaults_for(MapMode mode) {
  LossWeights w;
  w.lambda2 = is_incremental(mode) ? 0.1 : 0.3;
  w.lambda3 = is_incremental(mode) ? 1.0 : 0.0;
  w.lambda4 = 1.0;
  w.lambda5 = is_panoptic(mode) ? 1.0 : 0.0;
  return w;
}

void LossWeights::validate(MapMode mode) const {
  for (double v : {lambda2, lambda3, lambda4, lambda5}) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("loss weights must be finite and non-negative");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (!(beta_max > 0.0) || !std::isfinite(beta_max)) throw ConfigError("beta_max must be positive");
  if (!is_incremental(mode) && lambda3 != 0.0) {
    throw ConfigError("lambda3 (forgetting) is only used in incremental modes");
  }
  if (!is_panoptic(mode) && lambda5 != 0.0) {
    throw ConfigError("lambda5 (instance) is only used in panoptic modes");
  }
}

ScalarLoss sdf_bce(double pred, double d, double alpha) {
  const double s = pred / alpha;
  const double y = logistic(d / alpha);
  const double log_p = -softplus(-s);
  const double log_q = -softplus(s);
  ScalarLoss out;
  const bool clamp_p = log_p < kLogFloor;
  const bool clamp_q = log_q < kLogFloor;
  out.value = -(y * (clamp_p ? kLogFloor : log_p) + (1.0 - y) * (clamp_q ? kLogFloor : log_q));
  // d(-y log p)/ds = -y(1-p); d(-(1-y) log(1-p))/ds = (1-y)p
  const double p = logistic(s);
  double g = 0.0;
  if (!clamp_p) g += -y * (1.0 - p);
  if (!clamp_q) g += (1.0 - y) * p;
  out.grad = g / alpha;
  return out;
}

double sdf_loss(std::span<const double> pred, std::span<const double> d, double alpha) {
  if (pred.size() != d.size()) throw ContractError("sdf_loss: length mismatch");
  if (!(alpha > 0.0)) throw ConfigError("sdf_loss: alpha must be positive");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) sum += sdf_bce(pred[i], d[i], alpha).value;
  return sum / static_cast<double>(pred.size());
}

double eikonal_value(const Vec3& g) { return std::abs(g.norm() - 1.0); }

double cross_entropy(std::span<const double> logits, int target, std::span<double> grad) {
  if (target < 0 || static_cast<size_t>(target) >= logits.size()) {
    throw ContractError("cross_entropy: target " + std::to_string(target) + " out of range");
  }
  const double loss = -log_softmax_at(logits, target);
  if (!grad.empty()) {
    const auto p = softmax(logits);
    for (size_t i = 0; i < logits.size(); ++i) grad[i] = p[i] - (static_cast<int>(i) == target ? 1.0 : 0.0);
  }
  return loss;
}

double semantic_loss(const std::vector<std::vector<double>>& logits, std::span<const int> targets) {
  if (logits.size() != targets.size()) throw ContractError("semantic_loss: length mismatch");
  if (logits.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) sum += cross_entropy(logits[i], targets[i]);
  return sum / static_cast<double>(logits.size());
}

int instance_target(bool thing_class, uint32_t dense_instance) {
  return thing_class ? static_cast<int>(dense_instance) : 0;
}

double weighted_drift(std::span<const double> beta, std::span<const double> live, std::span<const double> prev) {
  if (beta.size() != live.size() || prev.size() != live.size()) {
    throw ContractError("forgetting: snapshot shape differs from live parameters");
  }
  double sum = 0.0;
  for (size_t i = 0; i < live.size(); ++i) {
    const double delta = live[i] - prev[i];
    sum += beta[i] * delta * delta;
  }
  return sum;
}

std::vector<double> flatten(const Mlp& mlp) {
  std::vector<double> out;
  for (const auto& l : mlp.layers()) append_flat(l, out);
  return out;
}

std::vector<double> flatten(const MlpGradient& grad) {
  std::vector<double> out;
  for (const auto& l : grad.layers) append_flat(l, out);
  return out;
}

ImportanceStore ImportanceStore::create(const MapModel& model) {
  ImportanceStore s;
  init_tensor(s.geo, model.grid.raw(FeatureTable::geometry));
  init_tensor(s.sem, model.grid.raw(FeatureTable::semantic));
  init_tensor(s.gnf, flatten(model.gnf));
  init_tensor(s.snf, flatten(model.snf));
  init_tensor(s.instance, flatten(model.instance_head));
  s.initialized = true;
  return s;
}

void ImportanceStore::sync_shapes(const MapModel& model) {
  if (!initialized) throw ContractError("importance: store not initialized");
  resize_tensor(geo, model.grid.raw(FeatureTable::geometry), "geometry_features", true);
  resize_tensor(sem, model.grid.raw(FeatureTable::semantic), "semantic_features", true);
  resize_tensor(gnf, flatten(model.gnf), "gnf", false);
  resize_tensor(snf, flatten(model.snf), "snf", false);
  resize_tensor(instance, flatten(model.instance_head), "instance_head", false);
}

void ImportanceStore::update_importance(const ModelGradient& g, double beta_max, const MapModel& model) {
  sync_shapes(model);
  accumulate_dense(gnf, flatten(g.gnf), beta_max);
  if (!g.snf.layers.empty()) accumulate_dense(snf, flatten(g.snf), beta_max);
  if (!g.instance.layers.empty()) accumulate_dense(instance, flatten(g.instance), beta_max);
  accumulate_sparse(geo, g.geo, beta_max);
  accumulate_sparse(sem, g.sem, beta_max);
}

void ImportanceStore::commit(const MapModel& model) {
  sync_shapes(model);
  for (Tensor* t : {&geo, &sem, &gnf, &snf, &instance}) t->beta = t->beta_next;
  geo.prev = model.grid.raw(FeatureTable::geometry);
  sem.prev = model.grid.raw(FeatureTable::semantic);
  gnf.prev = flatten(model.gnf);
  snf.prev = flatten(model.snf);
  instance.prev = flatten(model.instance_head);
}

double forgetting_loss(const MapModel& model, const ImportanceStore& store, ModelGradient* grad, double scale) {
  if (!store.initialized) throw ContractError("forgetting: importance store not initialized");
  const auto& geo_live = model.grid.raw(FeatureTable::geometry);
  const auto& sem_live = model.grid.raw(FeatureTable::semantic);
  if (store.geo.prev.size() != geo_live.size() || store.sem.prev.size() != sem_live.size()) {
    throw ContractError("forgetting: feature snapshot shape differs from live grid (call sync_shapes)");
  }
  const auto gnf_live = flatten(model.gnf);
  const auto snf_live = flatten(model.snf);
  const auto inst_live = flatten(model.instance_head);
  if (store.gnf.prev.size() != gnf_live.size() || store.snf.prev.size() != snf_live.size() ||
      store.instance.prev.size() != inst_live.size()) {
    throw ContractError("forgetting: decoder snapshot shape differs from live decoders");
  }
  double sum = 0.0;
  sum += drift_features(store.geo, geo_live, model.grid.dim(FeatureTable::geometry), grad ? &grad->geo : nullptr,
                        scale);
  sum += drift_features(store.sem, sem_live, model.grid.dim(FeatureTable::semantic), grad ? &grad->sem : nullptr,
                        scale);
  std::vector<double> g;
  sum += drift_dense(store.gnf, gnf_live, grad ? &g : nullptr, scale);
  if (grad) add_flat_to(grad->gnf, g);
  sum += drift_dense(store.snf, snf_live, grad ? &g : nullptr, scale);
  if (grad && !grad->snf.layers.empty()) add_flat_to(grad->snf, g);
  sum += drift_dense(store.instance, inst_live, grad ? &g : nullptr, scale);
  if (grad && !grad->instance.layers.empty()) add_flat_to(grad->instance, g);
  return sum;
}

}  // namespace semap
