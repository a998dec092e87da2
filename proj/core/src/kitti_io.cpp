#include "semap/kitti_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "semap/binary_io.hpp"
#include "semap/error.hpp"

namespace semap {
namespace {

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool parse_double(std::string_view tok, double& out) {
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

RigidTransform parse_pose(const std::string& text, const std::string& where) {
  std::istringstream ls(text);
  std::string tok;
  std::vector<double> v;
  while (ls >> tok) {
    double d;
    if (!parse_double(tok, d)) throw FormatError(where + ": not a number '" + tok + "'");
    v.push_back(d);
  }
  if (v.size() != 12) throw FormatError(where + ": expected 12 numbers, got " + std::to_string(v.size()));
  Mat4 m = Mat4::Identity();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<size_t>(r * 4 + c)];
  RigidTransform t;
  t.rotation = m.topLeftCorner<3, 3>();
  t.translation = m.topRightCorner<3, 1>();
  if (!t.is_rigid(1e-4)) throw FormatError(where + ": rotation block is not orthonormal");
  return t;
}

}  // namespace

RawScan read_raw_scan(const std::filesystem::path& bin_path, const std::filesystem::path& label_path) {
  RawScan scan;
  const auto bytes = slurp(bin_path);
  if (bytes.size() % 16 != 0) {
    throw FormatError(bin_path.string() + ": size " + std::to_string(bytes.size()) + " bytes is not a multiple of 16");
  }
  scan.points.resize(bytes.size() / 16);
  if (!bytes.empty()) std::memcpy(scan.points.data(), bytes.data(), bytes.size());
  if (label_path.empty()) {
    scan.labels.assign(scan.points.size(), 0);
    return scan;
  }
  const auto lb = slurp(label_path);
  if (lb.size() % 4 != 0) {
    throw FormatError(label_path.string() + ": size " + std::to_string(lb.size()) + " bytes is not a multiple of 4");
  }
  if (lb.size() / 4 != scan.points.size()) {
    throw FormatError(label_path.string() + ": " + std::to_string(lb.size()) + " label bytes for " +
                      std::to_string(bytes.size()) + " point bytes (" + std::to_string(lb.size() / 4) + " vs " +
                      std::to_string(scan.points.size()) + " records)");
  }
  scan.labels.resize(lb.size() / 4);
  if (!lb.empty()) std::memcpy(scan.labels.data(), lb.data(), lb.size());
  return scan;
}

void write_raw_scan(const std::filesystem::path& bin_path, const std::filesystem::path& label_path, const RawScan& scan) {
  if (scan.labels.size() != scan.points.size()) throw ContractError("write_raw_scan: label count mismatch");
  std::ofstream b(bin_path, std::ios::binary);
  if (!b) throw IoError("cannot write " + bin_path.string());
  b.write(reinterpret_cast<const char*>(scan.points.data()), static_cast<std::streamsize>(scan.points.size() * 16));
  if (!label_path.empty()) {
    std::ofstream l(label_path, std::ios::binary);
    if (!l) throw IoError("cannot write " + label_path.string());
    l.write(reinterpret_cast<const char*>(scan.labels.data()), static_cast<std::streamsize>(scan.labels.size() * 4));
  }
}

LabeledScan to_labeled_scan(const RawScan& raw, const RigidTransform& pose, const RigidTransform& calibration,
                            const Palette& palette, ReadStats* stats) {
  const RigidTransform world = pose * calibration;
  LabeledScan scan;
  scan.pose = world;
  scan.origin = world.translation;
  scan.endpoints.reserve(raw.points.size());
  for (size_t i = 0; i < raw.points.size(); ++i) {
    const auto& p = raw.points[i];
    scan.endpoints.push_back(world.apply(Vec3(p[0], p[1], p[2])));
    bool known = true;
    scan.labels.push_back(palette.map_raw(raw.labels[i] & 0xFFFFu, &known));
    if (!known && stats) ++stats->unknown_classes;
    scan.instances.push_back(raw.labels[i] >> 16);
  }
  return scan;
}

LabeledScan read_scan(const std::filesystem::path& bin_path, const std::filesystem::path& label_path,
                      const RigidTransform& pose, const RigidTransform& calibration, const Palette& palette,
                      ReadStats* stats) {
  return to_labeled_scan(read_raw_scan(bin_path, label_path), pose, calibration, palette, stats);
}

std::vector<RigidTransform> read_poses(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<RigidTransform> out;
  std::string line;
  size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_pose(line, path.string() + ":" + std::to_string(n)));
  }
  return out;
}

std::string format_pose_line(const RigidTransform& pose) {
  const Mat4 m = pose.matrix();
  std::string out;
  char buf[64];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      const auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
      if (!out.empty()) out += ' ';
      out.append(buf, res.ptr);
    }
  }
  return out;
}

void write_poses(const std::filesystem::path& path, const std::vector<RigidTransform>& poses) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& p : poses) os << format_pose_line(p) << "\n";
}

RigidTransform read_calibration(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("Tr:", 0) == 0) return parse_pose(line.substr(3), path.string() + " Tr");
  }
  return RigidTransform::identity();
}

}  // namespace semap
