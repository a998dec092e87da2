#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/ply.hpp"
#include "semap/scan.hpp"

namespace semap {

enum class PrimitiveType { plane, box, sphere };

/// Analytic scene element. Planes are horizontal rectangles at `center.z()` spanning
/// `size.x() × size.y()` around `center` and solid below. Boxes are axis-aligned with
/// full extents `size`.
struct Primitive {
  PrimitiveType type = PrimitiveType::plane;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Zero();
  double radius = 0.0;
  int class_id = 0;
  uint32_t instance = 0;
  Vec3 motion = Vec3::Zero();  ///< displacement per scan
  int first_scan = 0;
  int last_scan = -1;          ///< inclusive, -1 = until the end

  bool present(int scan) const { return scan >= first_scan && (last_scan < 0 || scan <= last_scan); }
  bool is_static() const { return motion.isZero() && first_scan == 0 && last_scan < 0; }
  Vec3 center_at(int scan) const { return center + motion * static_cast<double>(scan); }
  /// Signed distance at the primitive's scan-`scan` placement.
  double sdf(const Vec3& x, int scan = 0) const;
  /// Nearest ray parameter t > eps with o + t·d on the surface.
  std::optional<double> intersect(const Vec3& o, const Vec3& d, int scan = 0) const;
  double area() const;
};

struct SensorSpec {
  Vec3 start{0.0, 0.0, 1.8};
  Vec3 end{0.0, 0.0, 1.8};
  double max_range = 20.0;
  double min_elevation_deg = -30.0;
  double max_elevation_deg = 10.0;
};

/// Plain-text scene description, one directive per line, '#' comments:
///   sensor start=x,y,z end=x,y,z max_range=R elevation=lo:hi
///   plane center=x,y,z size=sx,sy class=C
///   box center=x,y,z size=sx,sy,sz class=C [instance=I] [motion=dx,dy,dz] [scans=a:b]
///   sphere center=x,y,z radius=r class=C [instance=I] [motion=..] [scans=a:b]
struct SceneSpec {
  std::string name = "scene";
  SensorSpec sensor;
  std::vector<Primitive> primitives;

  static SceneSpec parse(std::string_view text);
  static SceneSpec load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct SynthScene {
  SceneSpec spec;
  std::vector<LabeledScan> scans;  ///< labels are train ids, instances raw primitive ids
  std::vector<uint32_t> primitive_of;  ///< flattened per endpoint, scan-major

  /// Union SDF of the primitives present at `scan` (positive in free space).
  double sdf(const Vec3& x, int scan = 0) const;
  /// Union SDF of static primitives only.
  double static_sdf(const Vec3& x) const;
  /// Class of the static primitive nearest to x (0 if none).
  int nearest_static_class(const Vec3& x) const;
  /// Area-weighted samples on the exposed surface of static primitives.
  LabeledPoints sample_static_surface(size_t n, uint64_t seed) const;
};

/// Casts `rays_per_scan` random rays from each of `n_scans` poses spaced evenly along
/// the sensor segment. Misses and returns beyond max range are dropped.
SynthScene synth_scene(const SceneSpec& spec, int n_scans, int rays_per_scan, uint64_t seed);

/// First hit over all primitives present at `scan`: (t, primitive index).
std::optional<std::pair<double, size_t>> cast_ray(const SceneSpec& spec, const Vec3& o, const Vec3& d, int scan);

}  // namespace semap
