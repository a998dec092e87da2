#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/mesher.hpp"

namespace semap {

struct NormalEstimate {
  std::vector<Vec3> normals;
  std::vector<double> curvature;  ///< λ0 / (λ0 + λ1 + λ2)
  std::vector<uint8_t> valid;     ///< 0 when the neighborhood has rank < 2
};

/// Smallest-eigenvector normals of the k-NN covariance, flipped toward the viewpoint.
/// `viewpoints` holds one origin for all points or one per point.
NormalEstimate estimate_normals(std::span<const Vec3> points, size_t k, std::span<const Vec3> viewpoints);

struct OrientedPoints {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  ///< unit; zero vector marks "no normal"

  size_t size() const { return points.size(); }
};

struct IcpConfig {
  int max_iterations = 50;
  double tolerance = 1e-7;         ///< stop when the update norm drops below
  double max_distance = 1.0;       ///< correspondence gate, meters
  double max_normal_angle_deg = 30.0;
  size_t min_correspondences = 50;
  double degeneracy_ratio = 1e-6;  ///< min/max eigenvalue of the normal equations
};

struct IcpResult {
  RigidTransform transform;  ///< maps source into the target frame
  double residual = 0.0;     ///< RMS point-to-plane distance at `transform`
  size_t correspondences = 0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
  std::string diagnostic;
  std::vector<double> residual_history;  ///< accepted iterations, non-increasing
};

/// Gated point-to-plane ICP with small-angle linearization. Target normals are
/// required; source normals, when present, gate correspondences by angle. Throws
/// AlignmentError with fewer than `min_correspondences` valid pairs.
IcpResult icp_point_to_plane(const OrientedPoints& source, const OrientedPoints& target, const RigidTransform& init,
                             const IcpConfig& cfg = {});

/// Area-weighted mesh samples carrying their face normals.
OrientedPoints sample_oriented(const TriangleMesh& mesh, size_t n, uint64_t seed);

/// Point cloud with k-NN normals toward per-point viewpoints; invalid normals dropped.
OrientedPoints orient_points(std::span<const Vec3> points, std::span<const Vec3> viewpoints, size_t k = 16);

struct Submap {
  SemanticMesh mesh;               ///< in the submap's reference frame
  RigidTransform initial_pose;     ///< reference frame → world estimate (e.g. odometry)
  OrientedPoints overlap;          ///< overlap-scan points with the previous submap, own frame
  std::string name;
};

struct MergeConfig {
  double s_cube = 0.1;
  size_t target_samples = 20000;
  uint64_t seed = 7;
  IcpConfig icp;
};

struct MergeResult {
  SemanticMesh mesh;                        ///< in submap 0's frame
  std::vector<RigidTransform> to_first;     ///< submap i → submap 0
  std::vector<IcpResult> pairs;             ///< pair (i-1, i) at index i-1
};

/// Aligns each submap to its predecessor, chains the transforms into submap 0's
/// frame, and concatenates meshes. Triangles of a later submap whose centroid falls
/// within one cube of a cube already occupied by earlier geometry are dropped.
/// Throws AlignmentError naming the failing pair.
MergeResult merge_submaps(const std::vector<Submap>& submaps, const MergeConfig& cfg = {});

SemanticMesh transform_mesh(const SemanticMesh& mesh, const RigidTransform& t);

/// Merge manifest, one directive per line:
///   data <config path>        (data source the submaps were trained from)
///   submap <checkpoint path> <first scan> <last scan>
///   output <ply path>
/// Relative paths resolve against the manifest's directory.
struct MergeManifest {
  struct Entry {
    std::filesystem::path checkpoint;
    int first_scan = 0;
    int last_scan = 0;
  };
  std::filesystem::path data;
  std::vector<Entry> submaps;
  std::filesystem::path output;

  /// Scans shared by submaps i-1 and i.
  int overlap(size_t i) const { return submaps[i - 1].last_scan - submaps[i].first_scan + 1; }

  static MergeManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace semap
