#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "semap/mesher.hpp"
#include "semap/palette.hpp"
#include "semap/ply.hpp"

namespace semap {

/// Area-weighted uniform samples; each point takes its triangle's majority vertex
/// class (lowest id when all three differ) and the instance of that class's first vertex.
LabeledPoints sample_surface(const SemanticMesh& mesh, size_t n_points, uint64_t seed);

/// Nearest same-class distance for every point of `from` against `to` (meters).
/// Points whose class is absent from `to` get NaN.
std::vector<double> directed_class_distances(const LabeledPoints& from, const LabeledPoints& to);
/// Class-agnostic nearest distance for every point of `from`.
std::vector<double> directed_distances(const LabeledPoints& from, const LabeledPoints& to);

struct ClassDistance {
  int class_id = 0;
  size_t r_points = 0, t_points = 0;
  double accuracy = 0.0;    ///< mean d(r→T), meters
  double completion = 0.0;  ///< mean d(t→R), meters
  bool in_aggregate = false;  ///< present in both sets
};

struct ScdResult {
  std::vector<ClassDistance> classes;  ///< ascending class id
  double accuracy = 0.0;    ///< over points of classes present in both sets
  double completion = 0.0;
  double chamfer = 0.0;     ///< (accuracy + completion) / 2
  size_t r_used = 0, t_used = 0;
};

/// Semantic chamfer distance: nearest neighbors restricted to the same class.
ScdResult scd(const LabeledPoints& R, const LabeledPoints& T);

struct MetricReport {
  double tau = 0.1;              ///< meters
  double completion_cm = 0.0;
  double accuracy_cm = 0.0;
  double chamfer_l1_cm = 0.0;
  double completion_ratio = 0.0; ///< %
  double precision = 0.0;        ///< %
  double recall = 0.0;           ///< %
  double f_score = 0.0;          ///< %
  size_t r_points = 0, t_points = 0;
  bool class_aware = true;
  std::vector<ClassDistance> per_class;
};

/// Accuracy/completion from R (reconstruction) to T (ground truth) and back.
/// With `class_aware`, distances are same-class (SCD) and points of classes missing
/// from the other set are left out.
MetricReport reconstruction_metrics(const LabeledPoints& R, const LabeledPoints& T, double tau,
                                    bool class_aware = true);

std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& r);
void write_metric_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports);
std::string format_report(const MetricReport& r);
void write_class_csv(const std::filesystem::path& path, const MetricReport& r, const Palette& palette);

}  // namespace semap
