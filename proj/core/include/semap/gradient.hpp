#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "semap/mlp.hpp"
#include "semap/model.hpp"

namespace semap {

/// Fixed-width rows keyed by corner slot, kept in first-touch order so reductions are
/// deterministic.
class SparseRows {
 public:
  explicit SparseRows(int width = 0) : width_(width) {}

  int width() const { return width_; }
  size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  int64_t slot(size_t i) const { return slots_[i]; }
  std::span<double> row_at(size_t i) { return {values_.data() + i * width_, static_cast<size_t>(width_)}; }
  std::span<const double> row_at(size_t i) const {
    return {values_.data() + i * width_, static_cast<size_t>(width_)};
  }
  /// Row for `slot`, zero-initialized on first touch.
  std::span<double> row(int64_t slot);
  /// Null when the slot was never touched.
  const double* find(int64_t slot) const;
  void add_scaled(const SparseRows& other, double scale);
  void clear();
  bool all_finite() const;

 private:
  int width_;
  std::vector<int64_t> slots_;
  std::vector<double> values_;
  std::unordered_map<int64_t, size_t> index_;
};

/// Gradient of a scalar objective w.r.t. every trainable tensor of a MapModel.
struct ModelGradient {
  MlpGradient gnf;
  MlpGradient snf;
  MlpGradient instance;
  SparseRows geo;
  SparseRows sem;

  static ModelGradient zeros_like(const MapModel& model);
  void add_scaled(const ModelGradient& other, double scale);
  void clear();
  /// Name of the first tensor holding a non-finite entry, empty if all finite.
  std::string first_non_finite() const;
};

}  // namespace semap
