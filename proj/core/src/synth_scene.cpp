#include "semap/synth_scene.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "semap/error.hpp"

namespace semap {
namespace {

constexpr double kHitEps = 1e-9;

Vec3 parse_vec(const std::string& v, int n, const std::string& where) {
  Vec3 out = Vec3::Zero();
  std::istringstream ss(v);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= n) throw FormatError(where + ": too many components in '" + v + "'");
    try {
      size_t used = 0;
      out[i] = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw FormatError(where + ": not a number '" + tok + "'");
    }
    ++i;
  }
  if (i != n) throw FormatError(where + ": expected " + std::to_string(n) + " components in '" + v + "'");
  return out;
}

double parse_num(const std::string& v, const std::string& where) { return parse_vec(v, 1, where).x(); }

std::pair<double, double> parse_range(const std::string& v, const std::string& where) {
  const auto colon = v.find(':');
  if (colon == std::string::npos) throw FormatError(where + ": expected a:b, got '" + v + "'");
  return {parse_num(v.substr(0, colon), where), parse_num(v.substr(colon + 1), where)};
}

std::string vec_text(const Vec3& v, int n) {
  std::ostringstream ss;
  ss.precision(17);
  for (int i = 0; i < n; ++i) ss << (i ? "," : "") << v[i];
  return ss.str();
}

double box_sdf(const Vec3& p, const Vec3& half) {
  const Vec3 q = p.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

}  // namespace

double Primitive::sdf(const Vec3& x, int scan) const {
  const Vec3 p = x - center_at(scan);
  switch (type) {
    case PrimitiveType::sphere:
      return p.norm() - radius;
    case PrimitiveType::box:
      return box_sdf(p, 0.5 * size);
    case PrimitiveType::plane: {
      const double ox = std::max(std::abs(p.x()) - 0.5 * size.x(), 0.0);
      const double oy = std::max(std::abs(p.y()) - 0.5 * size.y(), 0.0);
      if (ox == 0.0 && oy == 0.0) return p.z();
      const double mag = std::sqrt(ox * ox + oy * oy + p.z() * p.z());
      return p.z() >= 0.0 ? mag : -mag;
    }
  }
  return 0.0;
}

std::optional<double> Primitive::intersect(const Vec3& o, const Vec3& d, int scan) const {
  const Vec3 c = center_at(scan);
  const Vec3 p = o - c;
  switch (type) {
    case PrimitiveType::plane: {
      if (d.z() == 0.0) return std::nullopt;
      const double t = -p.z() / d.z();
      if (t <= kHitEps) return std::nullopt;
      const Vec3 h = p + t * d;
      if (std::abs(h.x()) > 0.5 * size.x() || std::abs(h.y()) > 0.5 * size.y()) return std::nullopt;
      return t;
    }
    case PrimitiveType::sphere: {
      const double b = p.dot(d), cc = p.squaredNorm() - radius * radius;
      const double disc = b * b - cc;
      if (disc < 0.0) return std::nullopt;
      const double s = std::sqrt(disc);
      for (double t : {-b - s, -b + s}) {
        if (t > kHitEps) return t;
      }
      return std::nullopt;
    }
    case PrimitiveType::box: {
      double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        const double h = 0.5 * size[a];
        if (d[a] == 0.0) {
          if (std::abs(p[a]) > h) return std::nullopt;
          continue;
        }
        double ta = (-h - p[a]) / d[a], tb = (h - p[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
      }
      if (t0 > t1) return std::nullopt;
      if (t0 > kHitEps) return t0;
      if (t1 > kHitEps) return t1;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

double Primitive::area() const {
  switch (type) {
    case PrimitiveType::plane:
      return size.x() * size.y();
    case PrimitiveType::sphere:
      return 4.0 * std::numbers::pi * radius * radius;
    case PrimitiveType::box:
      return 2.0 * (size.x() * size.y() + size.y() * size.z() + size.x() * size.z());
  }
  return 0.0;
}

SceneSpec SceneSpec::parse(std::string_view text) {
  SceneSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    const std::string where = "scene line " + std::to_string(n);
    std::vector<std::pair<std::string, std::string>> kv;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw FormatError(where + ": expected key=value, got '" + tok + "'");
      kv.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    }
    if (kind == "name") {
      for (auto& [k, v] : kv) {
        if (k != "value") throw FormatError(where + ": unknown key '" + k + "'");
        spec.name = v;
      }
      continue;
    }
    if (kind == "sensor") {
      for (auto& [k, v] : kv) {
        if (k == "start") spec.sensor.start = parse_vec(v, 3, where);
        else if (k == "end") spec.sensor.end = parse_vec(v, 3, where);
        else if (k == "max_range") spec.sensor.max_range = parse_num(v, where);
        else if (k == "elevation") std::tie(spec.sensor.min_elevation_deg, spec.sensor.max_elevation_deg) = parse_range(v, where);
        else throw FormatError(where + ": unknown sensor key '" + k + "'");
      }
      if (!(spec.sensor.max_range > 0.0)) throw FormatError(where + ": max_range must be positive");
      continue;
    }
    Primitive p;
    if (kind == "plane") p.type = PrimitiveType::plane;
    else if (kind == "box") p.type = PrimitiveType::box;
    else if (kind == "sphere") p.type = PrimitiveType::sphere;
    else throw FormatError(where + ": unknown directive '" + kind + "'");
    bool has_class = false, has_shape = false;
    for (auto& [k, v] : kv) {
      if (k == "center") p.center = parse_vec(v, 3, where);
      else if (k == "size" && p.type == PrimitiveType::plane) p.size = parse_vec(v, 2, where), has_shape = true;
      else if (k == "size" && p.type == PrimitiveType::box) p.size = parse_vec(v, 3, where), has_shape = true;
      else if (k == "radius" && p.type == PrimitiveType::sphere) p.radius = parse_num(v, where), has_shape = true;
      else if (k == "class") p.class_id = static_cast<int>(parse_num(v, where)), has_class = true;
      else if (k == "instance") p.instance = static_cast<uint32_t>(parse_num(v, where));
      else if (k == "motion") p.motion = parse_vec(v, 3, where);
      else if (k == "scans") {
        const auto [a, b] = parse_range(v, where);
        p.first_scan = static_cast<int>(a);
        p.last_scan = static_cast<int>(b);
      } else throw FormatError(where + ": unknown " + kind + " key '" + k + "'");
    }
    if (!has_class) throw FormatError(where + ": missing class");
    if (!has_shape) throw FormatError(where + ": missing size/radius");
    if (p.type == PrimitiveType::sphere ? !(p.radius > 0.0) : (p.size.head(p.type == PrimitiveType::box ? 3 : 2).minCoeff() <= 0.0)) {
      throw FormatError(where + ": extents must be positive");
    }
    spec.primitives.push_back(p);
  }
  if (spec.primitives.empty()) throw FormatError("scene: no primitives");
  return spec;
}

SceneSpec SceneSpec::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open scene " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  SceneSpec spec = parse(ss.str());
  if (spec.name == "scene") spec.name = path.stem().string();
  return spec;
}

std::string SceneSpec::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "name value=" << name << "\n";
  out << "sensor start=" << vec_text(sensor.start, 3) << " end=" << vec_text(sensor.end, 3)
      << " max_range=" << sensor.max_range << " elevation=" << sensor.min_elevation_deg << ":"
      << sensor.max_elevation_deg << "\n";
  for (const auto& p : primitives) {
    switch (p.type) {
      case PrimitiveType::plane:
        out << "plane center=" << vec_text(p.center, 3) << " size=" << vec_text(p.size, 2);
        break;
      case PrimitiveType::box:
        out << "box center=" << vec_text(p.center, 3) << " size=" << vec_text(p.size, 3);
        break;
      case PrimitiveType::sphere:
        out << "sphere center=" << vec_text(p.center, 3) << " radius=" << p.radius;
        break;
    }
    out << " class=" << p.class_id;
    if (p.instance) out << " instance=" << p.instance;
    if (!p.motion.isZero()) out << " motion=" << vec_text(p.motion, 3);
    if (p.first_scan != 0 || p.last_scan >= 0) out << " scans=" << p.first_scan << ":" << p.last_scan;
    out << "\n";
  }
  return out.str();
}

std::optional<std::pair<double, size_t>> cast_ray(const SceneSpec& spec, const Vec3& o, const Vec3& d, int scan) {
  std::optional<std::pair<double, size_t>> best;
  for (size_t i = 0; i < spec.primitives.size(); ++i) {
    const Primitive& p = spec.primitives[i];
    if (!p.present(scan)) continue;
    if (auto t = p.intersect(o, d, scan); t && (!best || *t < best->first)) best = std::pair{*t, i};
  }
  return best;
}

double SynthScene::sdf(const Vec3& x, int scan) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : spec.primitives) {
    if (p.present(scan)) best = std::min(best, p.sdf(x, scan));
  }
  return best;
}

double SynthScene::static_sdf(const Vec3& x) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : spec.primitives) {
    if (p.is_static()) best = std::min(best, p.sdf(x));
  }
  return best;
}

int SynthScene::nearest_static_class(const Vec3& x) const {
  double best = std::numeric_limits<double>::infinity();
  int cls = 0;
  for (const auto& p : spec.primitives) {
    if (!p.is_static()) continue;
    const double d = std::abs(p.sdf(x));
    if (d < best) {
      best = d;
      cls = p.class_id;
    }
  }
  return cls;
}

LabeledPoints SynthScene::sample_static_surface(size_t n, uint64_t seed) const {
  std::vector<const Primitive*> prims;
  std::vector<double> areas;
  for (const auto& p : spec.primitives) {
    if (!p.is_static()) continue;
    prims.push_back(&p);
    areas.push_back(p.area());
  }
  LabeledPoints out;
  if (prims.empty() || n == 0) return out;
  std::mt19937_64 rng(seed);
  std::discrete_distribution<size_t> pick(areas.begin(), areas.end());
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::normal_distribution<double> g;
  // Rejection keeps only points on the exposed union surface.
  size_t guard = 0;
  while (out.size() < n && guard++ < 50 * n) {
    const Primitive& p = *prims[pick(rng)];
    Vec3 x;
    switch (p.type) {
      case PrimitiveType::plane:
        x = p.center + Vec3(u(rng) * p.size.x(), u(rng) * p.size.y(), 0.0);
        break;
      case PrimitiveType::sphere: {
        Vec3 dir(g(rng), g(rng), g(rng));
        x = p.center + p.radius * dir.normalized();
        break;
      }
      case PrimitiveType::box: {
        const double axy = p.size.x() * p.size.y(), ayz = p.size.y() * p.size.z(), axz = p.size.x() * p.size.z();
        std::uniform_real_distribution<double> f(0.0, axy + ayz + axz);
        const double r = f(rng);
        const int axis = r < axy ? 2 : (r < axy + ayz ? 0 : 1);
        Vec3 l(u(rng) * p.size.x(), u(rng) * p.size.y(), u(rng) * p.size.z());
        l[axis] = (rng() & 1 ? 0.5 : -0.5) * p.size[axis];
        x = p.center + l;
        break;
      }
    }
    if (std::abs(static_sdf(x)) > 1e-9) continue;
    out.points.push_back(x);
    out.class_id.push_back(static_cast<uint16_t>(p.class_id));
    out.instance_id.push_back(static_cast<uint16_t>(p.instance));
  }
  return out;
}

SynthScene synth_scene(const SceneSpec& spec, int n_scans, int rays_per_scan, uint64_t seed) {
  if (n_scans <= 0 || rays_per_scan <= 0) throw ConfigError("synth: ray budget must be positive");
  SynthScene scene;
  scene.spec = spec;
  const double lo = spec.sensor.min_elevation_deg * std::numbers::pi / 180.0;
  const double hi = spec.sensor.max_elevation_deg * std::numbers::pi / 180.0;
  for (int s = 0; s < n_scans; ++s) {
    const double f = n_scans > 1 ? static_cast<double>(s) / (n_scans - 1) : 0.0;
    const Vec3 origin = spec.sensor.start + f * (spec.sensor.end - spec.sensor.start);
    LabeledScan scan;
    scan.origin = origin;
    scan.pose.translation = origin;
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(s) + 1);
    std::uniform_real_distribution<double> az(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> el(std::sin(lo), std::sin(hi));
    for (int r = 0; r < rays_per_scan; ++r) {
      const double a = az(rng);
      const double z = el(rng);  // uniform over the spherical band
      const double c = std::sqrt(1.0 - z * z);
      const Vec3 d(c * std::cos(a), c * std::sin(a), z);
      const auto hit = cast_ray(spec, origin, d, s);
      if (!hit || hit->first > spec.sensor.max_range) continue;
      const Primitive& p = spec.primitives[hit->second];
      Vec3 e = origin + hit->first * d;
      if (p.type == PrimitiveType::plane) e.z() = p.center_at(s).z();
      scan.endpoints.push_back(e);
      scan.labels.push_back(p.class_id);
      scan.instances.push_back(p.instance);
      scene.primitive_of.push_back(static_cast<uint32_t>(hit->second));
    }
    scene.scans.push_back(std::move(scan));
  }
  return scene;
}

}  // namespace semap
