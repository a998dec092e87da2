#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/scan.hpp"

namespace semap {

enum class Band : uint8_t { surface, free };

struct TrainingSample {
  Vec3 x = Vec3::Zero();
  double d = 0.0;          ///< signed along-ray distance to the endpoint, + toward the sensor
  int class_id = -1;       ///< -1 for free-space samples
  uint32_t instance_id = 0;
  Band band = Band::free;
  uint32_t ray = 0;        ///< global ray index in the sampler's ray table
};

struct SamplerConfig {
  int samples_per_ray = 6;   ///< N, split evenly between surface band and free space
  double band_width = 0.3;   ///< meters
  double min_range = 1.5;    ///< free-space sampling starts this far from the sensor
};

struct RayLabels {
  int class_id = 0;
  uint32_t instance_id = 0;
};

/// Samples one ray. Returns no samples (and leaves `out` untouched) when the ray is not
/// longer than the band.
bool sample_ray(const Vec3& origin, const Vec3& endpoint, RayLabels labels, const SamplerConfig& cfg,
                std::mt19937_64& rng, std::vector<TrainingSample>& out, uint32_t ray_index = 0);

/// Seed for the per-ray stream of `ray` at `step`; independent of thread partitioning.
uint64_t ray_stream_seed(uint64_t seed, uint64_t step, uint64_t ray);

/// Mini-batch assembly over a fixed set of scans.
class BatchSampler {
 public:
  struct RayRef {
    uint32_t scan;
    uint32_t point;
  };

  /// Rays whose class is in `drop_surface_classes` keep their free-space samples but emit
  /// no surface samples.
  BatchSampler(std::span<const LabeledScan> scans, SamplerConfig cfg, uint64_t seed,
               std::set<int> drop_surface_classes = {});

  size_t ray_count() const { return rays_.size(); }
  const RayRef& ray(size_t i) const { return rays_.at(i); }
  const SamplerConfig& config() const { return cfg_; }

  /// Ray indices of the next step: uniform without replacement, sorted ascending.
  /// Every ray when rays_per_step >= ray_count().
  std::vector<uint32_t> select_rays(uint64_t step, size_t rays_per_step) const;

  /// Samples for the rays of `step`.
  std::vector<TrainingSample> build_batch(uint64_t step, size_t rays_per_step) const;
  std::vector<TrainingSample> sample_rays(uint64_t step, std::span<const uint32_t> rays) const;

  /// Rays skipped because they were not longer than the surface band.
  size_t skipped_rays() const { return skipped_; }

 private:
  std::span<const LabeledScan> scans_;
  SamplerConfig cfg_;
  uint64_t seed_;
  std::set<int> drop_surface_;
  std::vector<RayRef> rays_;
  mutable size_t skipped_ = 0;
};

}  // namespace semap
