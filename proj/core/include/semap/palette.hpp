#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace semap {

struct ClassInfo {
  int id = 0;
  std::string name;
  std::array<uint8_t, 3> rgb{};
  bool thing = false;
  bool dynamic = false;
};

/// Train-id class table with the raw→train remap used when reading label files.
/// Class 0 is always "unlabeled" and is excluded from semantic supervision.
class Palette {
 public:
  /// SemanticKITTI 19-class learning map (20 entries including unlabeled).
  static Palette semantic_kitti();

  /// Text format, one directive per line ('#' comments):
  ///   class <id> <name> <r> <g> <b> <thing|stuff>
  ///   raw <raw_id> <train_id>
  ///   dynamic <train_id>
  static Palette load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  /// Sidecar written next to meshes: "<class_id> <name> <r> <g> <b>" per line.
  void write_sidecar(const std::filesystem::path& path) const;

  int class_count() const { return static_cast<int>(classes_.size()); }
  const ClassInfo& info(int id) const;
  const std::vector<ClassInfo>& classes() const { return classes_; }
  bool is_thing(int id) const;
  bool is_dynamic(int id) const;
  std::set<int> dynamic_classes() const;

  /// Replaces the dynamic set. Throws ConfigError on ids outside the palette.
  void set_dynamic(const std::set<int>& ids);

  /// Maps a raw dataset class (low 16 label bits) to a train id. Unknown raw ids map
  /// to 0 and set `known` to false. An empty raw table is the identity map.
  int map_raw(uint32_t raw, bool* known = nullptr) const;

  /// Lowest raw id mapping to `train_id` (the id itself with an empty raw table).
  /// Throws ConfigError when no raw id maps to it.
  uint32_t raw_id(int train_id) const;
  void add_class(ClassInfo info);
  void add_raw(uint32_t raw, int train_id) { raw_to_train_[raw] = train_id; }

 private:
  std::vector<ClassInfo> classes_;
  std::map<uint32_t, int> raw_to_train_;
};

}  // namespace semap
