#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "semap/geometry.hpp"
#include "semap/palette.hpp"
#include "semap/scan.hpp"

namespace semap {

/// Sensor-frame sweep as stored on disk: float32 x,y,z,intensity and uint32 labels
/// (low 16 bits class, high 16 bits instance).
struct RawScan {
  std::vector<std::array<float, 4>> points;
  std::vector<uint32_t> labels;
};

/// Empty `label_path` reads points only (all labels 0). Throws FormatError when a file
/// size is not a multiple of the record size or the counts disagree.
RawScan read_raw_scan(const std::filesystem::path& bin_path, const std::filesystem::path& label_path);
void write_raw_scan(const std::filesystem::path& bin_path, const std::filesystem::path& label_path, const RawScan& scan);

struct ReadStats {
  size_t unknown_classes = 0;  ///< points whose raw class is not in the palette
};

/// World-frame scan: points mapped by pose∘calibration, classes remapped through the
/// palette (unknown raw classes become 0 and are counted), raw instance ids kept.
LabeledScan to_labeled_scan(const RawScan& raw, const RigidTransform& pose, const RigidTransform& calibration,
                            const Palette& palette, ReadStats* stats = nullptr);

LabeledScan read_scan(const std::filesystem::path& bin_path, const std::filesystem::path& label_path,
                      const RigidTransform& pose, const RigidTransform& calibration, const Palette& palette,
                      ReadStats* stats = nullptr);

/// One pose per line, 12 numbers (row-major 3×4). Throws FormatError naming the line.
std::vector<RigidTransform> read_poses(const std::filesystem::path& path);
/// Shortest round-trip decimal text, so read_poses ∘ write_poses is exact.
void write_poses(const std::filesystem::path& path, const std::vector<RigidTransform>& poses);
std::string format_pose_line(const RigidTransform& pose);

/// Sensor-to-body transform from a calib file's "Tr:" line; identity when absent.
RigidTransform read_calibration(const std::filesystem::path& path);

}  // namespace semap
