#include "semap/instance_vocab.hpp"

#include "semap/error.hpp"

namespace semap {

InstanceVocabulary::InstanceVocabulary(size_t q_max) : q_max_(q_max) {
  if (q_max < 1) throw ConfigError("instance vocabulary: q_max must be >= 1");
}

uint32_t InstanceVocabulary::add(uint32_t raw) {
  if (raw == 0) return 0;
  if (auto it = map_.find(raw); it != map_.end()) return it->second;
  if (order_.size() >= q_max_) {
    if (overflowed_.try_emplace(raw, true).second) ++overflow_;
    return 0;
  }
  order_.push_back(raw);
  const auto id = static_cast<uint32_t>(order_.size());
  map_.emplace(raw, id);
  return id;
}

uint32_t InstanceVocabulary::dense(uint32_t raw) const {
  auto it = map_.find(raw);
  return it == map_.end() ? 0 : it->second;
}

InstanceVocabulary build_instance_vocab(std::span<const LabeledScan> scans, size_t q_max, const Palette& palette) {
  InstanceVocabulary vocab(q_max);
  for (const LabeledScan& s : scans) {
    for (size_t i = 0; i < s.size(); ++i) {
      if (palette.is_thing(s.labels[i])) vocab.add(s.instances[i]);
    }
  }
  return vocab;
}

void apply_instance_vocab(std::span<LabeledScan> scans, const InstanceVocabulary& vocab, const Palette& palette) {
  for (LabeledScan& s : scans) {
    for (size_t i = 0; i < s.size(); ++i) {
      s.instances[i] = palette.is_thing(s.labels[i]) ? vocab.dense(s.instances[i]) : 0;
    }
  }
}

}  // namespace semap
