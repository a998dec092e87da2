#include "semap/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "semap/error.hpp"

namespace semap {
namespace {

uint64_t splitmix(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void LabeledScan::validate() const {
  if (labels.size() != endpoints.size() || instances.size() != endpoints.size()) {
    throw ContractError("scan: endpoints/labels/instances length mismatch");
  }
  if (!pose.is_rigid(1e-6)) throw ContractError("scan: pose is not a rigid transform");
}

uint64_t ray_stream_seed(uint64_t seed, uint64_t step, uint64_t ray) {
  return splitmix(splitmix(splitmix(seed) ^ step) ^ (ray * 0xd1342543de82ef95ULL));
}

bool sample_ray(const Vec3& origin, const Vec3& endpoint, RayLabels labels, const SamplerConfig& cfg,
                std::mt19937_64& rng, std::vector<TrainingSample>& out, uint32_t ray_index) {
  if (cfg.samples_per_ray < 2 || cfg.samples_per_ray % 2 != 0) {
    throw ConfigError("sampler: samples per ray must be even and >= 2");
  }
  const Vec3 delta = endpoint - origin;
  const double length = delta.norm();
  if (!(length > cfg.band_width)) return false;
  const Vec3 dir = delta / length;
  const int half = cfg.samples_per_ray / 2;

  std::uniform_real_distribution<double> band(-cfg.band_width, cfg.band_width);
  for (int i = 0; i < half; ++i) {
    const double offset = band(rng);
    TrainingSample s;
    s.x = endpoint - offset * dir;
    s.d = offset;
    s.class_id = labels.class_id;
    s.instance_id = labels.instance_id;
    s.band = Band::surface;
    s.ray = ray_index;
    out.push_back(s);
  }

  const double free_end = length - cfg.band_width;
  const double free_start = std::min(cfg.min_range, free_end);
  std::uniform_real_distribution<double> free(free_start, free_end);
  for (int i = 0; i < half; ++i) {
    const double t = free(rng);
    TrainingSample s;
    s.x = origin + t * dir;
    s.d = length - t;
    s.band = Band::free;
    s.ray = ray_index;
    out.push_back(s);
  }
  return true;
}

BatchSampler::BatchSampler(std::span<const LabeledScan> scans, SamplerConfig cfg, uint64_t seed,
                           std::set<int> drop_surface_classes)
    : scans_(scans), cfg_(cfg), seed_(seed), drop_surface_(std::move(drop_surface_classes)) {
  if (scans_.empty()) throw ContractError("sampler: at least one scan required");
  for (uint32_t s = 0; s < scans_.size(); ++s) {
    scans_[s].validate();
    for (uint32_t p = 0; p < scans_[s].size(); ++p) rays_.push_back({s, p});
  }
}

std::vector<uint32_t> BatchSampler::select_rays(uint64_t step, size_t rays_per_step) const {
  std::vector<uint32_t> out;
  if (rays_per_step >= rays_.size()) {
    out.resize(rays_.size());
    std::iota(out.begin(), out.end(), 0u);
    return out;
  }
  std::mt19937_64 rng(splitmix(seed_ ^ splitmix(step + 0x5bd1e995ULL)));
  out.reserve(rays_per_step);
  std::vector<uint32_t> all(rays_.size());
  std::iota(all.begin(), all.end(), 0u);
  std::ranges::sample(all, std::back_inserter(out), static_cast<std::ptrdiff_t>(rays_per_step), rng);
  return out;
}

std::vector<TrainingSample> BatchSampler::sample_rays(uint64_t step, std::span<const uint32_t> rays) const {
  std::vector<TrainingSample> out;
  out.reserve(rays.size() * static_cast<size_t>(cfg_.samples_per_ray));
  std::vector<TrainingSample> tmp;
  for (uint32_t r : rays) {
    const RayRef& ref = rays_[r];
    const LabeledScan& scan = scans_[ref.scan];
    std::mt19937_64 rng(ray_stream_seed(seed_, step, r));
    tmp.clear();
    const RayLabels labels{scan.labels[ref.point], scan.instances[ref.point]};
    if (!sample_ray(scan.origin, scan.endpoints[ref.point], labels, cfg_, rng, tmp, r)) {
      ++skipped_;
      continue;
    }
    const bool drop_surface = drop_surface_.count(labels.class_id) > 0;
    for (const auto& s : tmp) {
      if (drop_surface && s.band == Band::surface) continue;
      out.push_back(s);
    }
  }
  return out;
}

std::vector<TrainingSample> BatchSampler::build_batch(uint64_t step, size_t rays_per_step) const {
  const auto rays = select_rays(step, rays_per_step);
  return sample_rays(step, rays);
}

}  // namespace semap
