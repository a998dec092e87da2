#include "semap/ply.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "semap/binary_io.hpp"
#include "semap/error.hpp"

namespace semap {
namespace {

struct Property {
  std::string name;
  std::string type;
  bool list = false;
  std::string count_type;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> props;
};

size_t type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw FormatError("ply: unknown property type '" + t + "'");
}

double read_scalar(std::istream& is, const std::string& t) {
  if (t == "char" || t == "int8") return binio::read<int8_t>(is, "ply value");
  if (t == "uchar" || t == "uint8") return binio::read<uint8_t>(is, "ply value");
  if (t == "short" || t == "int16") return binio::read<int16_t>(is, "ply value");
  if (t == "ushort" || t == "uint16") return binio::read<uint16_t>(is, "ply value");
  if (t == "int" || t == "int32") return binio::read<int32_t>(is, "ply value");
  if (t == "uint" || t == "uint32") return binio::read<uint32_t>(is, "ply value");
  if (t == "float" || t == "float32") return binio::read<float>(is, "ply value");
  if (t == "double" || t == "float64") return binio::read<double>(is, "ply value");
  throw FormatError("ply: unknown property type '" + t + "'");
}

std::vector<Element> read_header(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "ply") throw FormatError("ply: missing magic");
  std::vector<Element> elements;
  bool binary_le = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (word == "element") {
      Element e;
      ls >> e.name >> e.count;
      if (!ls) throw FormatError("ply: malformed element line");
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw FormatError("ply: property before element");
      Property p;
      ls >> p.type;
      if (p.type == "list") {
        p.list = true;
        ls >> p.count_type >> p.type;
      }
      ls >> p.name;
      if (!ls) throw FormatError("ply: malformed property line");
      type_size(p.type);
      elements.back().props.push_back(p);
    } else if (word == "end_header") {
      if (!binary_le) throw FormatError("ply: only binary_little_endian is supported");
      return elements;
    } else if (word != "comment" && word != "obj_info" && !word.empty()) {
      throw FormatError("ply: unexpected header line '" + line + "'");
    }
  }
  throw FormatError("ply: header not terminated");
}

void write_vertex_header(std::ostream& os, size_t vertices, bool color) {
  os << "ply\nformat binary_little_endian 1.0\n";
  os << "element vertex " << vertices << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  if (color) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  os << "property ushort class_id\nproperty ushort instance_id\n";
}

struct RawPly {
  std::vector<Vec3> points;
  std::vector<uint16_t> cls, inst;
  std::vector<std::array<uint8_t, 3>> rgb;
  std::vector<std::array<uint32_t, 3>> faces;
};

RawPly read_raw(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const auto elements = read_header(is);
  RawPly out;
  for (const Element& e : elements) {
    if (e.name == "vertex") {
      out.points.resize(e.count);
      out.cls.assign(e.count, 0);
      out.inst.assign(e.count, 0);
      out.rgb.assign(e.count, {0, 0, 0});
      for (size_t i = 0; i < e.count; ++i) {
        for (const Property& p : e.props) {
          if (p.list) {
            const auto n = static_cast<size_t>(read_scalar(is, p.count_type));
            for (size_t k = 0; k < n; ++k) read_scalar(is, p.type);
            continue;
          }
          const double v = read_scalar(is, p.type);
          if (p.name == "x") out.points[i].x() = v;
          else if (p.name == "y") out.points[i].y() = v;
          else if (p.name == "z") out.points[i].z() = v;
          else if (p.name == "red") out.rgb[i][0] = static_cast<uint8_t>(v);
          else if (p.name == "green") out.rgb[i][1] = static_cast<uint8_t>(v);
          else if (p.name == "blue") out.rgb[i][2] = static_cast<uint8_t>(v);
          else if (p.name == "class_id") out.cls[i] = static_cast<uint16_t>(v);
          else if (p.name == "instance_id") out.inst[i] = static_cast<uint16_t>(v);
        }
      }
    } else if (e.name == "face") {
      out.faces.reserve(e.count);
      for (size_t i = 0; i < e.count; ++i) {
        for (const Property& p : e.props) {
          if (!p.list) {
            read_scalar(is, p.type);
            continue;
          }
          const auto n = static_cast<size_t>(read_scalar(is, p.count_type));
          std::vector<uint32_t> idx(n);
          for (auto& k : idx) k = static_cast<uint32_t>(read_scalar(is, p.type));
          if (p.name != "vertex_indices" && p.name != "vertex_index") continue;
          if (n < 3) throw FormatError("ply: face with fewer than 3 vertices");
          for (size_t k = 1; k + 1 < n; ++k) out.faces.push_back({idx[0], idx[k], idx[k + 1]});
        }
      }
    } else {
      for (size_t i = 0; i < e.count; ++i) {
        for (const Property& p : e.props) {
          const size_t n = p.list ? static_cast<size_t>(read_scalar(is, p.count_type)) : 1;
          for (size_t k = 0; k < n; ++k) read_scalar(is, p.type);
        }
      }
    }
  }
  for (const auto& f : out.faces) {
    for (uint32_t i : f) {
      if (i >= out.points.size()) throw FormatError("ply: face index out of range in " + path.string());
    }
  }
  return out;
}

}  // namespace

void write_ply(const std::filesystem::path& path, const SemanticMesh& mesh) {
  mesh.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  write_vertex_header(os, mesh.vertices.size(), true);
  os << "element face " << mesh.triangles.size() << "\n";
  os << "property list uchar uint vertex_indices\nend_header\n";
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) binio::write<float>(os, static_cast<float>(mesh.vertices[i][a]));
    for (int a = 0; a < 3; ++a) binio::write<uint8_t>(os, mesh.rgb[i][a]);
    binio::write<uint16_t>(os, mesh.class_id[i]);
    binio::write<uint16_t>(os, mesh.instance_id[i]);
  }
  for (const auto& t : mesh.triangles) {
    binio::write<uint8_t>(os, 3);
    for (uint32_t i : t) binio::write<uint32_t>(os, i);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

SemanticMesh read_ply(const std::filesystem::path& path) {
  RawPly raw = read_raw(path);
  SemanticMesh m;
  m.vertices = std::move(raw.points);
  m.triangles = std::move(raw.faces);
  m.class_id = std::move(raw.cls);
  m.instance_id = std::move(raw.inst);
  m.rgb = std::move(raw.rgb);
  return m;
}

void write_point_ply(const std::filesystem::path& path, const LabeledPoints& points) {
  if (points.class_id.size() != points.size() || points.instance_id.size() != points.size()) {
    throw ContractError("point ply: attribute count mismatch");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  write_vertex_header(os, points.size(), false);
  os << "end_header\n";
  for (size_t i = 0; i < points.size(); ++i) {
    for (int a = 0; a < 3; ++a) binio::write<float>(os, static_cast<float>(points.points[i][a]));
    binio::write<uint16_t>(os, points.class_id[i]);
    binio::write<uint16_t>(os, points.instance_id[i]);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

LabeledPoints read_point_ply(const std::filesystem::path& path) {
  RawPly raw = read_raw(path);
  return {std::move(raw.points), std::move(raw.cls), std::move(raw.inst)};
}

}  // namespace semap
