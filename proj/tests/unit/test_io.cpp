#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "helpers.hpp"
#include "semap/error.hpp"
#include "semap/kitti_io.hpp"
#include "semap/mesher.hpp"
#include "semap/ply.hpp"

using namespace semap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void put_bytes(const fs::path& p, const std::string& bytes) { std::ofstream(p, std::ios::binary) << bytes; }

template <typename T>
void append(std::string& s, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("kitti: empty scan") {
    TempDir d("semap_io_empty");
    put_bytes(d.path / "a.bin", "");
    put_bytes(d.path / "a.label", "");
    const RawScan r = read_raw_scan(d.path / "a.bin", d.path / "a.label");
    CHECK(r.points.empty());
    CHECK(r.labels.empty());
  }

  TEST_CASE("kitti: two-point byte fixture with identity pose") {
    TempDir d("semap_io_two");
    std::string bin, lab;
    for (float v : {1.0f, 2.0f, 3.0f, 0.5f, -4.0f, 0.25f, 8.0f, 0.0f}) append(bin, v);
    append<uint32_t>(lab, 40u | (7u << 16));  // raw class 40 (road), instance 7
    append<uint32_t>(lab, 10u);               // raw class 10 (car)
    REQUIRE(bin.size() == 32);
    put_bytes(d.path / "a.bin", bin);
    put_bytes(d.path / "a.label", lab);
    ReadStats st;
    const LabeledScan s = read_scan(d.path / "a.bin", d.path / "a.label", RigidTransform::identity(),
                                    RigidTransform::identity(), Palette::semantic_kitti(), &st);
    REQUIRE(s.size() == 2);
    CHECK(s.endpoints[0] == Vec3(1, 2, 3));
    CHECK(s.endpoints[1] == Vec3(-4, 0.25, 8));
    CHECK(s.origin == Vec3::Zero());
    CHECK(s.labels[0] == 9);   // road
    CHECK(s.labels[1] == 1);   // car
    CHECK(s.instances[0] == 7u);
    CHECK(s.instances[1] == 0u);
    CHECK(st.unknown_classes == 0);

    // Round trip through the writer is byte-identical.
    const RawScan raw = read_raw_scan(d.path / "a.bin", d.path / "a.label");
    write_raw_scan(d.path / "b.bin", d.path / "b.label", raw);
    CHECK(slurp(d.path / "b.bin") == bin);
    CHECK(slurp(d.path / "b.label") == lab);

    put_bytes(d.path / "bad.bin", bin.substr(0, 30));
    CHECK_THROWS_AS(read_raw_scan(d.path / "bad.bin", ""), FormatError);
    put_bytes(d.path / "short.label", lab.substr(0, 4));
    CHECK_THROWS_AS(read_raw_scan(d.path / "a.bin", d.path / "short.label"), FormatError);
  }

  TEST_CASE("kitti: pose and calibration compose, unknown classes counted") {
    RawScan raw;
    raw.points = {{1.0f, 0.0f, 0.0f, 0.0f}};
    raw.labels = {999u};
    const RigidTransform pose = RigidTransform::from_axis_angle(Vec3::UnitZ(), std::acos(-1.0) / 2, Vec3(10, 0, 0));
    const RigidTransform calib = RigidTransform::from_axis_angle(Vec3::UnitX(), 0.0, Vec3(0, 0, 1));
    ReadStats st;
    const LabeledScan s = to_labeled_scan(raw, pose, calib, Palette::semantic_kitti(), &st);
    CHECK((s.endpoints[0] - Vec3(10, 1, 1)).norm() < 1e-12);
    CHECK((s.origin - Vec3(10, 0, 1)).norm() < 1e-12);
    CHECK(s.labels[0] == 0);
    CHECK(st.unknown_classes == 1);
  }

  TEST_CASE("poses: exact text round trip and line-numbered errors") {
    TempDir d("semap_io_poses");
    std::mt19937_64 rng(3);
    std::vector<RigidTransform> poses;
    for (int i = 0; i < 20; ++i) poses.push_back(test::random_pose(rng));
    write_poses(d.path / "poses.txt", poses);
    const auto back = read_poses(d.path / "poses.txt");
    REQUIRE(back.size() == poses.size());
    for (size_t i = 0; i < poses.size(); ++i) CHECK(back[i].matrix() == poses[i].matrix());

    put_bytes(d.path / "bad.txt", "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n");
    try {
      read_poses(d.path / "bad.txt");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    put_bytes(d.path / "calib.txt", "P0: 1 2 3\nTr: 1 0 0 0.5 0 1 0 0 0 0 1 0\n");
    CHECK(read_calibration(d.path / "calib.txt").translation == Vec3(0.5, 0, 0));
    put_bytes(d.path / "nocalib.txt", "P0: 1 2 3\n");
    CHECK(read_calibration(d.path / "nocalib.txt").matrix() == Mat4::Identity());
  }

  TEST_CASE("ply: exact header and byte layout") {
    TempDir d("semap_io_ply");
    SemanticMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0.5}};
    m.triangles = {{0, 1, 2}};
    m.class_id = {3, 3, 65535};
    m.instance_id = {0, 1, 2};
    m.rgb = {{{1, 2, 3}}, {{4, 5, 6}}, {{7, 8, 9}}};
    write_ply(d.path / "m.ply", m);
    const std::string bytes = slurp(d.path / "m.ply");
    const std::string header =
        "ply\nformat binary_little_endian 1.0\nelement vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "property ushort class_id\nproperty ushort instance_id\n"
        "element face 1\nproperty list uchar uint vertex_indices\nend_header\n";
    REQUIRE(bytes.substr(0, header.size()) == header);
    std::string body;
    for (size_t i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) append(body, static_cast<float>(m.vertices[i][k]));
      for (int k = 0; k < 3; ++k) append(body, m.rgb[i][static_cast<size_t>(k)]);
      append(body, m.class_id[i]);
      append(body, m.instance_id[i]);
    }
    append<uint8_t>(body, 3);
    for (uint32_t v : {0u, 1u, 2u}) append(body, v);
    CHECK(bytes.substr(header.size()) == body);

    const SemanticMesh back = read_ply(d.path / "m.ply");
    CHECK(back.vertices == m.vertices);
    CHECK(back.triangles == m.triangles);
    CHECK(back.class_id == m.class_id);
    CHECK(back.instance_id == m.instance_id);
    CHECK(back.rgb == m.rgb);

    LabeledPoints p{m.vertices, m.class_id, m.instance_id};
    write_point_ply(d.path / "p.ply", p);
    const LabeledPoints pb = read_point_ply(d.path / "p.ply");
    CHECK(pb.points == p.points);
    CHECK(pb.class_id == p.class_id);

    put_bytes(d.path / "ascii.ply", "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n");
    CHECK_THROWS_AS(read_ply(d.path / "ascii.ply"), FormatError);
    put_bytes(d.path / "cut.ply", bytes.substr(0, bytes.size() - 2));
    CHECK_THROWS_AS(read_ply(d.path / "cut.ply"), FormatError);
  }

  TEST_CASE("palette sidecar lists every class") {
    TempDir d("semap_io_sidecar");
    const Palette p = test::tiny_palette();
    p.write_sidecar(d.path / "m.classes.txt");
    std::ifstream in(d.path / "m.classes.txt");
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
      if (!line.empty() && line[0] != '#') lines.push_back(line);
    }
    REQUIRE(lines.size() == 3);
    CHECK(lines[2] == "2 car 100 150 245");
  }
}
