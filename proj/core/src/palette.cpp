#include "semap/palette.hpp"

#include <fstream>
#include <sstream>

#include "semap/error.hpp"

namespace semap {

Palette Palette::semantic_kitti() {
  Palette p;
  struct Row {
    const char* name;
    uint8_t r, g, b;
    bool thing;
  };
  // RGB from the SemanticKITTI color map (the upstream yaml stores BGR).
  static const Row rows[] = {
      {"unlabeled", 0, 0, 0, false},        {"car", 100, 150, 245, true},
      {"bicycle", 100, 230, 245, true},     {"motorcycle", 30, 60, 150, true},
      {"truck", 80, 30, 180, true},         {"other-vehicle", 0, 0, 255, true},
      {"person", 255, 30, 30, true},        {"bicyclist", 255, 40, 200, true},
      {"motorcyclist", 150, 30, 90, true},  {"road", 255, 0, 255, false},
      {"parking", 255, 150, 255, false},    {"sidewalk", 75, 0, 75, false},
      {"other-ground", 175, 0, 75, false},  {"building", 255, 200, 0, false},
      {"fence", 255, 120, 50, false},       {"vegetation", 0, 175, 0, false},
      {"trunk", 135, 60, 0, false},         {"terrain", 150, 240, 80, false},
      {"pole", 255, 240, 150, false},       {"traffic-sign", 255, 0, 0, false},
  };
  int id = 0;
  for (const Row& r : rows) p.add_class({id++, r.name, {r.r, r.g, r.b}, r.thing, false});
  static const std::pair<uint32_t, int> raw[] = {
      {0, 0},    {1, 0},    {10, 1},   {11, 2},   {13, 5},   {15, 3},   {16, 5},
      {18, 4},   {20, 5},   {30, 6},   {31, 7},   {32, 8},   {40, 9},   {44, 10},
      {48, 11},  {49, 12},  {50, 13},  {51, 14},  {52, 0},   {60, 9},   {70, 15},
      {71, 16},  {72, 17},  {80, 18},  {81, 19},  {99, 0},   {252, 1},  {253, 7},
      {254, 6},  {255, 8},  {256, 5},  {257, 5},  {258, 4},  {259, 5},
  };
  for (const auto& [r, t] : raw) p.add_raw(r, t);
  return p;
}

void Palette::add_class(ClassInfo info) {
  if (info.id != static_cast<int>(classes_.size())) {
    throw ConfigError("palette: class ids must be contiguous from 0 (got " + std::to_string(info.id) + ")");
  }
  classes_.push_back(std::move(info));
}

const ClassInfo& Palette::info(int id) const {
  if (id < 0 || id >= class_count()) throw ConfigError("palette: unknown class " + std::to_string(id));
  return classes_[static_cast<size_t>(id)];
}

bool Palette::is_thing(int id) const { return id > 0 && id < class_count() && classes_[id].thing; }
bool Palette::is_dynamic(int id) const { return id >= 0 && id < class_count() && classes_[id].dynamic; }

std::set<int> Palette::dynamic_classes() const {
  std::set<int> out;
  for (const auto& c : classes_) {
    if (c.dynamic) out.insert(c.id);
  }
  return out;
}

void Palette::set_dynamic(const std::set<int>& ids) {
  for (int id : ids) {
    if (id < 0 || id >= class_count()) {
      throw ConfigError("palette: dynamic class " + std::to_string(id) + " not in palette");
    }
  }
  for (auto& c : classes_) c.dynamic = ids.count(c.id) > 0;
}

int Palette::map_raw(uint32_t raw, bool* known) const {
  if (raw_to_train_.empty()) {
    const bool ok = raw < static_cast<uint32_t>(class_count());
    if (known) *known = ok;
    return ok ? static_cast<int>(raw) : 0;
  }
  auto it = raw_to_train_.find(raw);
  if (known) *known = it != raw_to_train_.end();
  return it == raw_to_train_.end() ? 0 : it->second;
}

uint32_t Palette::raw_id(int train_id) const {
  if (raw_to_train_.empty()) {
    if (train_id < 0 || train_id >= class_count()) throw ConfigError("palette: no class " + std::to_string(train_id));
    return static_cast<uint32_t>(train_id);
  }
  for (const auto& [raw, train] : raw_to_train_) {
    if (train == train_id) return raw;
  }
  throw ConfigError("palette: no raw id maps to class " + std::to_string(train_id));
}

Palette Palette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("palette: cannot open " + path.string());
  Palette p;
  std::set<int> dynamic;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;
    auto fail = [&] {
      throw ConfigError("palette " + path.string() + ":" + std::to_string(lineno) + ": malformed '" + kind + "'");
    };
    if (kind == "class") {
      ClassInfo c;
      int r, g, b;
      std::string tag;
      if (!(ss >> c.id >> c.name >> r >> g >> b >> tag) || (tag != "thing" && tag != "stuff")) fail();
      c.rgb = {static_cast<uint8_t>(r), static_cast<uint8_t>(g), static_cast<uint8_t>(b)};
      c.thing = tag == "thing";
      p.add_class(std::move(c));
    } else if (kind == "raw") {
      uint32_t raw;
      int train;
      if (!(ss >> raw >> train)) fail();
      p.add_raw(raw, train);
    } else if (kind == "dynamic") {
      int id;
      if (!(ss >> id)) fail();
      dynamic.insert(id);
    } else {
      fail();
    }
  }
  if (p.class_count() < 2) throw ConfigError("palette: need at least unlabeled + one class");
  for (const auto& [raw, train] : p.raw_to_train_) {
    if (train < 0 || train >= p.class_count()) {
      throw ConfigError("palette: raw id " + std::to_string(raw) + " maps outside the class table");
    }
  }
  p.set_dynamic(dynamic);
  return p;
}

void Palette::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("palette: cannot write " + path.string());
  for (const auto& c : classes_) {
    out << "class " << c.id << ' ' << c.name << ' ' << int(c.rgb[0]) << ' ' << int(c.rgb[1]) << ' '
        << int(c.rgb[2]) << ' ' << (c.thing ? "thing" : "stuff") << '\n';
  }
  for (const auto& [raw, train] : raw_to_train_) out << "raw " << raw << ' ' << train << '\n';
  for (int id : dynamic_classes()) out << "dynamic " << id << '\n';
}

void Palette::write_sidecar(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("palette: cannot write " + path.string());
  for (const auto& c : classes_) {
    out << c.id << ' ' << c.name << ' ' << int(c.rgb[0]) << ' ' << int(c.rgb[1]) << ' ' << int(c.rgb[2])
        << '\n';
  }
}

}  // namespace semap
