#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "semap/palette.hpp"
#include "semap/scan.hpp"

namespace semap {

/// Raw instance id → dense id in [1, q_max]; 0 is reserved for "no instance".
class InstanceVocabulary {
 public:
  explicit InstanceVocabulary(size_t q_max = 64);

  size_t q_max() const { return q_max_; }
  size_t size() const { return order_.size(); }
  /// Logit count of an instance head over this vocabulary (ids 0..q_max).
  int head_width() const { return static_cast<int>(q_max_) + 1; }
  size_t overflow_count() const { return overflow_; }
  const std::vector<uint32_t>& raw_ids() const { return order_; }

  /// Registers `raw` in first-seen order. Raw 0 and ids past capacity map to 0; each
  /// distinct overflowing id is counted once.
  uint32_t add(uint32_t raw);
  /// Dense id of a registered raw id, 0 otherwise.
  uint32_t dense(uint32_t raw) const;

 private:
  size_t q_max_;
  std::vector<uint32_t> order_;
  std::unordered_map<uint32_t, uint32_t> map_;
  std::unordered_map<uint32_t, bool> overflowed_;
  size_t overflow_ = 0;
};

/// Scans in order, points in order; only thing-class points contribute.
InstanceVocabulary build_instance_vocab(std::span<const LabeledScan> scans, size_t q_max, const Palette& palette);

/// Replaces raw instance ids with dense ids; stuff-class points get 0.
void apply_instance_vocab(std::span<LabeledScan> scans, const InstanceVocabulary& vocab, const Palette& palette);

}  // namespace semap
