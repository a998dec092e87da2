#include "semap/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "semap/error.hpp"
#include "semap/parallel.hpp"
#include "semap/spatial_hash.hpp"

namespace semap {
namespace {

constexpr size_t kChunk = 4096;

double cell_for(const LabeledPoints& pts) {
  // Roughly a few points per cell for surface-like sets.
  if (pts.size() < 2) return 1.0;
  Vec3 lo = pts.points[0], hi = pts.points[0];
  for (const auto& p : pts.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 ext = (hi - lo).cwiseMax(Vec3::Constant(1e-6));
  const double area = ext.x() * ext.y() + ext.y() * ext.z() + ext.x() * ext.z();
  return std::max(1e-4, std::sqrt(4.0 * area / static_cast<double>(pts.size())));
}

std::vector<double> nearest_all(const std::vector<Vec3>& from, const PointIndex& index) {
  std::vector<double> out(from.size());
  const size_t chunks = (from.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](size_t c) {
    const size_t end = std::min(from.size(), (c + 1) * kChunk);
    for (size_t i = c * kChunk; i < end; ++i) out[i] = index.nearest(from[i])->distance;
  });
  return out;
}

LabeledPoints subset(const LabeledPoints& pts, int cls, std::vector<size_t>* ids) {
  LabeledPoints s;
  for (size_t i = 0; i < pts.size(); ++i) {
    if (pts.class_id[i] != cls) continue;
    s.points.push_back(pts.points[i]);
    s.class_id.push_back(pts.class_id[i]);
    s.instance_id.push_back(pts.instance_id[i]);
    if (ids) ids->push_back(i);
  }
  return s;
}

double mean_finite(const std::vector<double>& v, size_t* count) {
  double sum = 0.0;
  size_t n = 0;
  for (double d : v) {
    if (std::isnan(d)) continue;
    sum += d;
    ++n;
  }
  if (count) *count = n;
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

LabeledPoints sample_surface(const SemanticMesh& mesh, size_t n_points, uint64_t seed) {
  if (mesh.triangles.empty()) throw MetricError("sample_surface: mesh is empty");
  mesh.validate();
  std::vector<double> cdf(mesh.triangles.size());
  double total = 0.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& f = mesh.triangles[t];
    total += 0.5 * (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]).norm();
    cdf[t] = total;
  }
  if (!(total > 0.0)) throw MetricError("sample_surface: mesh has zero area");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  LabeledPoints out;
  out.points.reserve(n_points);
  for (size_t i = 0; i < n_points; ++i) {
    const double pick = u01(rng) * total;
    const size_t t = std::min(mesh.triangles.size() - 1,
                              static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin()));
    double a = u01(rng), b = u01(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const auto& f = mesh.triangles[t];
    const Vec3& p0 = mesh.vertices[f[0]];
    out.points.push_back(p0 + a * (mesh.vertices[f[1]] - p0) + b * (mesh.vertices[f[2]] - p0));
    const uint16_t c0 = mesh.class_id[f[0]], c1 = mesh.class_id[f[1]], c2 = mesh.class_id[f[2]];
    uint16_t cls;
    if (c0 == c1 || c0 == c2) cls = c0;
    else if (c1 == c2) cls = c1;
    else cls = std::min({c0, c1, c2});
    uint16_t inst = 0;
    for (uint32_t v : f) {
      if (mesh.class_id[v] == cls) {
        inst = mesh.instance_id[v];
        break;
      }
    }
    out.class_id.push_back(cls);
    out.instance_id.push_back(inst);
  }
  return out;
}

std::vector<double> directed_distances(const LabeledPoints& from, const LabeledPoints& to) {
  if (to.size() == 0) return std::vector<double>(from.size(), std::numeric_limits<double>::quiet_NaN());
  const PointIndex index(to.points, cell_for(to));
  return nearest_all(from.points, index);
}

std::vector<double> directed_class_distances(const LabeledPoints& from, const LabeledPoints& to) {
  std::vector<double> out(from.size(), std::numeric_limits<double>::quiet_NaN());
  std::set<int> classes(from.class_id.begin(), from.class_id.end());
  for (int c : classes) {
    std::vector<size_t> ids;
    const LabeledPoints src = subset(from, c, &ids);
    const LabeledPoints dst = subset(to, c, nullptr);
    if (dst.size() == 0) continue;
    const auto d = directed_distances(src, dst);
    for (size_t k = 0; k < ids.size(); ++k) out[ids[k]] = d[k];
  }
  return out;
}

ScdResult scd(const LabeledPoints& R, const LabeledPoints& T) {
  const auto dr = directed_class_distances(R, T);
  const auto dt = directed_class_distances(T, R);
  std::map<int, ClassDistance> table;
  std::map<int, double> acc_sum, com_sum;
  for (size_t i = 0; i < R.size(); ++i) {
    auto& e = table[R.class_id[i]];
    ++e.r_points;
    if (!std::isnan(dr[i])) acc_sum[R.class_id[i]] += dr[i];
  }
  for (size_t i = 0; i < T.size(); ++i) {
    auto& e = table[T.class_id[i]];
    ++e.t_points;
    if (!std::isnan(dt[i])) com_sum[T.class_id[i]] += dt[i];
  }
  ScdResult out;
  for (auto& [c, e] : table) {
    e.class_id = c;
    e.in_aggregate = e.r_points > 0 && e.t_points > 0;
    if (e.in_aggregate) {
      e.accuracy = acc_sum[c] / static_cast<double>(e.r_points);
      e.completion = com_sum[c] / static_cast<double>(e.t_points);
    }
    out.classes.push_back(e);
  }
  out.accuracy = mean_finite(dr, &out.r_used);
  out.completion = mean_finite(dt, &out.t_used);
  out.chamfer = 0.5 * (out.accuracy + out.completion);
  return out;
}

MetricReport reconstruction_metrics(const LabeledPoints& R, const LabeledPoints& T, double tau, bool class_aware) {
  if (!(tau > 0.0)) throw ConfigError("metrics: tau must be positive");
  if (R.size() == 0 || T.size() == 0) throw MetricError("metrics: empty point set");
  MetricReport rep;
  rep.tau = tau;
  rep.class_aware = class_aware;
  std::vector<double> dr, dt;
  if (class_aware) {
    const ScdResult s = scd(R, T);
    rep.per_class = s.classes;
    dr = directed_class_distances(R, T);
    dt = directed_class_distances(T, R);
  } else {
    dr = directed_distances(R, T);
    dt = directed_distances(T, R);
  }
  size_t nr = 0, nt = 0, hit_r = 0, hit_t = 0;
  double sr = 0.0, st = 0.0;
  for (double d : dr) {
    if (std::isnan(d)) continue;
    ++nr;
    sr += d;
    hit_r += d < tau;
  }
  for (double d : dt) {
    if (std::isnan(d)) continue;
    ++nt;
    st += d;
    hit_t += d < tau;
  }
  if (nr == 0 || nt == 0) throw MetricError("metrics: no class shared by both point sets");
  rep.r_points = nr;
  rep.t_points = nt;
  rep.accuracy_cm = 100.0 * sr / static_cast<double>(nr);
  rep.completion_cm = 100.0 * st / static_cast<double>(nt);
  rep.chamfer_l1_cm = 0.5 * (rep.accuracy_cm + rep.completion_cm);
  rep.precision = 100.0 * static_cast<double>(hit_r) / static_cast<double>(nr);
  rep.recall = 100.0 * static_cast<double>(hit_t) / static_cast<double>(nt);
  rep.completion_ratio = rep.recall;
  rep.f_score = rep.precision + rep.recall > 0.0 ? 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall) : 0.0;
  return rep;
}

std::string metric_csv_header() {
  return "tau_m,completion_cm,accuracy_cm,chamfer_l1_cm,completion_ratio_pct,precision_pct,recall_pct,f_score_pct,"
         "r_points,t_points,class_aware";
}

std::string metric_csv_row(const MetricReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%zu,%d", r.tau, r.completion_cm,
                r.accuracy_cm, r.chamfer_l1_cm, r.completion_ratio, r.precision, r.recall, r.f_score, r.r_points,
                r.t_points, r.class_aware ? 1 : 0);
  return buf;
}

void write_metric_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << metric_csv_header() << "\n";
  for (const auto& r : reports) out << metric_csv_row(r) << "\n";
}

std::string format_report(const MetricReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "tau %.3f m: Com %.2f cm  Acc %.2f cm  Ch-L1 %.2f cm  Com.R %.2f %%  F-score %.2f %%  (R %zu, T %zu)",
                r.tau, r.completion_cm, r.accuracy_cm, r.chamfer_l1_cm, r.completion_ratio, r.f_score, r.r_points,
                r.t_points);
  return buf;
}

void write_class_csv(const std::filesystem::path& path, const MetricReport& r, const Palette& palette) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "class_id,name,r_points,t_points,accuracy_cm,completion_cm,scd_cm,in_aggregate\n";
  char buf[512];
  for (const auto& c : r.per_class) {
    const std::string name = c.class_id < palette.class_count() ? palette.info(c.class_id).name : "unknown";
    std::snprintf(buf, sizeof buf, "%d,%s,%zu,%zu,%.17g,%.17g,%.17g,%d\n", c.class_id, name.c_str(), c.r_points,
                  c.t_points, 100.0 * c.accuracy, 100.0 * c.completion, 50.0 * (c.accuracy + c.completion),
                  c.in_aggregate ? 1 : 0);
    out << buf;
  }
}

}  // namespace semap
