#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "semap/ply.hpp"
#include "semap/pipeline.hpp"

namespace semap {

struct CriterionResult {
  int id = 0;                ///< acceptance criterion number
  std::string name;
  bool passed = false;
  std::string detail;        ///< one-line human summary
  std::map<std::string, double> values;
};

struct SuiteReport {
  std::string suite;
  std::vector<CriterionResult> criteria;
  double seconds = 0.0;

  bool passed() const;
  /// suite,criterion,name,passed,key,value rows (one per value).
  std::string csv() const;
  std::string summary() const;
};

struct SuiteOptions {
  std::filesystem::path scene_dir;  ///< empty = scenes shipped with the sources
  uint64_t seed = 42;
  std::ostream* log = nullptr;      ///< progress lines, optional
};

/// geometry, semantic, panoptic, forgetting, dynamic, merge, sparsity.
const std::vector<std::string>& suite_names();

/// Runs one synthetic experiment. Throws ConfigError for unknown names.
SuiteReport run_suite(const std::string& name, const SuiteOptions& options = {});

std::filesystem::path default_scene_dir();

/// Samples of the static analytic surface lying within `radius` of any scan endpoint,
/// drawn from `candidates` uniform surface samples and mapped by `to_frame`.
LabeledPoints observed_surface(const SynthScene& scene, std::span<const LabeledScan> scans, size_t candidates,
                               double radius, uint64_t seed,
                               const RigidTransform& to_frame = RigidTransform::identity());

}  // namespace semap
