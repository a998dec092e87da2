#include "semap/merger.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_set>

#include "semap/error.hpp"
#include "semap/parallel.hpp"
#include "semap/spatial_hash.hpp"

namespace semap {
namespace {

double typical_spacing(std::span<const Vec3> pts) {
  if (pts.size() < 2) return 1.0;
  Vec3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 e = (hi - lo).cwiseMax(Vec3::Constant(1e-6));
  return std::max(1e-3, std::sqrt(4.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z()) / static_cast<double>(pts.size())));
}

struct Pair {
  uint32_t source, target;
  double residual;
};

std::vector<Pair> correspondences(const OrientedPoints& src, const OrientedPoints& dst, const PointIndex& index,
                                  const RigidTransform& t, const IcpConfig& cfg) {
  const double cos_gate = std::cos(cfg.max_normal_angle_deg * std::numbers::pi / 180.0);
  constexpr size_t kChunk = 2048;
  const size_t chunks = (src.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<Pair>> parts(chunks);
  parallel_for(chunks, [&](size_t c) {
    const size_t end = std::min(src.size(), (c + 1) * kChunk);
    for (size_t i = c * kChunk; i < end; ++i) {
      const Vec3 p = t.apply(src.points[i]);
      const auto nn = index.nearest(p);
      if (!nn || nn->distance > cfg.max_distance) continue;
      const Vec3& n = dst.normals[nn->index];
      if (!src.normals.empty() && !src.normals[i].isZero()) {
        if (t.rotate(src.normals[i]).dot(n) < cos_gate) continue;
      }
      parts[c].push_back({static_cast<uint32_t>(i), nn->index, n.dot(p - dst.points[nn->index])});
    }
  });
  std::vector<Pair> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

double rms(const std::vector<Pair>& pairs) {
  double s = 0.0;
  for (const auto& p : pairs) s += p.residual * p.residual;
  return pairs.empty() ? 0.0 : std::sqrt(s / static_cast<double>(pairs.size()));
}

struct CellHash {
  size_t operator()(const std::array<int64_t, 3>& c) const {
    uint64_t h = 1469598103934665603ULL;
    for (int64_t v : c) h = (h ^ static_cast<uint64_t>(v)) * 1099511628211ULL;
    return h;
  }
};

}  // namespace

NormalEstimate estimate_normals(std::span<const Vec3> points, size_t k, std::span<const Vec3> viewpoints) {
  if (viewpoints.size() != 1 && viewpoints.size() != points.size()) {
    throw ContractError("estimate_normals: need one viewpoint or one per point");
  }
  if (points.size() < k + 1) throw ContractError("estimate_normals: need at least k+1 points");
  NormalEstimate out;
  out.normals.assign(points.size(), Vec3::Zero());
  out.curvature.assign(points.size(), 0.0);
  out.valid.assign(points.size(), 0);
  const PointIndex index(points, typical_spacing(points));
  constexpr size_t kChunk = 1024;
  parallel_for((points.size() + kChunk - 1) / kChunk, [&](size_t c) {
    const size_t end = std::min(points.size(), (c + 1) * kChunk);
    for (size_t i = c * kChunk; i < end; ++i) {
      const auto nb = index.knn(points[i], k + 1);
      Vec3 mean = Vec3::Zero();
      for (const auto& n : nb) mean += points[n.index];
      mean /= static_cast<double>(nb.size());
      Mat3 cov = Mat3::Zero();
      for (const auto& n : nb) {
        const Vec3 d = points[n.index] - mean;
        cov += d * d.transpose();
      }
      const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
      const Vec3 ev = es.eigenvalues().cwiseMax(0.0);
      const double sum = ev.sum();
      // Rank < 2: the middle eigenvalue vanishes relative to the largest.
      if (!(sum > 0.0) || ev[1] <= 1e-10 * ev[2]) continue;
      Vec3 n = es.eigenvectors().col(0);
      const Vec3& view = viewpoints.size() == 1 ? viewpoints[0] : viewpoints[i];
      if (n.dot(view - points[i]) < 0.0) n = -n;
      out.normals[i] = n;
      out.curvature[i] = ev[0] / sum;
      out.valid[i] = 1;
    }
  });
  return out;
}

OrientedPoints orient_points(std::span<const Vec3> points, std::span<const Vec3> viewpoints, size_t k) {
  const NormalEstimate ne = estimate_normals(points, k, viewpoints);
  OrientedPoints out;
  for (size_t i = 0; i < points.size(); ++i) {
    if (!ne.valid[i]) continue;
    out.points.push_back(points[i]);
    out.normals.push_back(ne.normals[i]);
  }
  return out;
}

OrientedPoints sample_oriented(const TriangleMesh& mesh, size_t n, uint64_t seed) {
  OrientedPoints out;
  if (mesh.triangles.empty()) return out;
  std::vector<double> cdf(mesh.triangles.size());
  double total = 0.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) cdf[t] = total += triangle_area(mesh, t);
  if (!(total > 0.0)) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (size_t i = 0; i < n; ++i) {
    const size_t t = std::min(mesh.triangles.size() - 1,
                              static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end(), u(rng) * total) - cdf.begin()));
    double a = u(rng), b = u(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const auto& f = mesh.triangles[t];
    const Vec3& p0 = mesh.vertices[f[0]];
    out.points.push_back(p0 + a * (mesh.vertices[f[1]] - p0) + b * (mesh.vertices[f[2]] - p0));
    out.normals.push_back(triangle_normal(mesh, t));
  }
  return out;
}

IcpResult icp_point_to_plane(const OrientedPoints& source, const OrientedPoints& target, const RigidTransform& init,
                             const IcpConfig& cfg) {
  if (target.normals.size() != target.points.size()) throw ContractError("icp: target needs one normal per point");
  if (!source.normals.empty() && source.normals.size() != source.points.size()) {
    throw ContractError("icp: source normal count mismatch");
  }
  const PointIndex index(target.points, std::max(cfg.max_distance * 0.25, typical_spacing(target.points)));
  IcpResult res;
  res.transform = init;
  auto pairs = correspondences(source, target, index, res.transform, cfg);
  if (pairs.size() < cfg.min_correspondences) {
    throw AlignmentError("icp: " + std::to_string(pairs.size()) + " valid correspondences, need " +
                         std::to_string(cfg.min_correspondences));
  }
  res.residual = rms(pairs);
  res.correspondences = pairs.size();
  res.residual_history.push_back(res.residual);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    for (const Pair& p : pairs) {
      const Vec3 x = res.transform.apply(source.points[p.source]);
      const Vec3& n = target.normals[p.target];
      Eigen::Matrix<double, 6, 1> J;
      J << x.cross(n), n;
      A += J * J.transpose();
      b -= J * p.residual;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(A);
    const double lmin = es.eigenvalues()[0], lmax = es.eigenvalues()[5];
    if (!(lmax > 0.0) || lmin < cfg.degeneracy_ratio * lmax) {
      res.degenerate = true;
      res.converged = false;
      std::ostringstream d;
      d << "icp: degenerate normal equations (eigenvalue ratio " << (lmax > 0.0 ? lmin / lmax : 0.0)
        << "), weakest direction [" << es.eigenvectors().col(0).transpose() << "] (rotation, translation)";
      res.diagnostic = d.str();
      return res;
    }
    const Eigen::Matrix<double, 6, 1> x = A.ldlt().solve(b);
    const Vec3 w = x.head<3>();
    RigidTransform step = RigidTransform::from_axis_angle(w.norm() > 0.0 ? Vec3(w.normalized()) : Vec3::UnitZ(),
                                                          w.norm(), x.tail<3>());
    RigidTransform next = step * res.transform;
    next.reorthonormalize();
    auto next_pairs = correspondences(source, target, index, next, cfg);
    ++res.iterations;
    if (next_pairs.size() < cfg.min_correspondences) {
      res.diagnostic = "icp: correspondences lost after update";
      break;
    }
    const double r = rms(next_pairs);
    if (r > res.residual) {
      // Rejected: the accepted residual sequence stays non-increasing.
      res.converged = true;
      break;
    }
    res.transform = next;
    res.residual = r;
    res.correspondences = next_pairs.size();
    res.residual_history.push_back(r);
    pairs = std::move(next_pairs);
    if (x.norm() < cfg.tolerance) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged && res.diagnostic.empty()) res.diagnostic = "icp: iteration limit reached";
  return res;
}

SemanticMesh transform_mesh(const SemanticMesh& mesh, const RigidTransform& t) {
  SemanticMesh out = mesh;
  for (auto& v : out.vertices) v = t.apply(v);
  return out;
}

MergeResult merge_submaps(const std::vector<Submap>& submaps, const MergeConfig& cfg) {
  if (submaps.empty()) throw ContractError("merge: no submaps");
  if (!(cfg.s_cube > 0.0)) throw ConfigError("merge: s_cube must be positive");
  MergeResult out;
  out.mesh = submaps[0].mesh;
  out.to_first.push_back(RigidTransform::identity());
  if (submaps.size() == 1) return out;

  std::vector<IcpResult> pairs(submaps.size() - 1);
  parallel_for(pairs.size(), [&](size_t k) {
    const Submap& prev = submaps[k];
    const Submap& cur = submaps[k + 1];
    const std::string pair = "(" + (prev.name.empty() ? std::to_string(k) : prev.name) + ", " +
                             (cur.name.empty() ? std::to_string(k + 1) : cur.name) + ")";
    const OrientedPoints target = sample_oriented(prev.mesh.geometry(), cfg.target_samples, cfg.seed + k);
    if (target.size() == 0) throw AlignmentError("merge pair " + pair + ": previous submap mesh is empty");
    const RigidTransform init = prev.initial_pose.inverse() * cur.initial_pose;
    try {
      pairs[k] = icp_point_to_plane(cur.overlap, target, init, cfg.icp);
    } catch (const AlignmentError& e) {
      throw AlignmentError("merge pair " + pair + ": " + e.what());
    }
    if (pairs[k].degenerate) throw AlignmentError("merge pair " + pair + ": " + pairs[k].diagnostic);
  });
  out.pairs = pairs;

  std::unordered_set<std::array<int64_t, 3>, CellHash> occupied;
  auto cell = [&](const Vec3& p) {
    return std::array<int64_t, 3>{static_cast<int64_t>(std::floor(p.x() / cfg.s_cube)),
                                  static_cast<int64_t>(std::floor(p.y() / cfg.s_cube)),
                                  static_cast<int64_t>(std::floor(p.z() / cfg.s_cube))};
  };
  auto mark = [&](const SemanticMesh& m) {
    for (const auto& t : m.triangles) {
      for (uint32_t v : t) occupied.insert(cell(m.vertices[v]));
      occupied.insert(cell((m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0));
    }
  };
  mark(out.mesh);

  for (size_t i = 1; i < submaps.size(); ++i) {
    out.to_first.push_back(out.to_first.back() * pairs[i - 1].transform);
    const SemanticMesh moved = transform_mesh(submaps[i].mesh, out.to_first.back());
    std::vector<uint8_t> keep(moved.triangles.size(), 1);
    for (size_t t = 0; t < moved.triangles.size(); ++t) {
      const auto& f = moved.triangles[t];
      const auto c = cell((moved.vertices[f[0]] + moved.vertices[f[1]] + moved.vertices[f[2]]) / 3.0);
      for (int dz = -1; dz <= 1 && keep[t]; ++dz)
        for (int dy = -1; dy <= 1 && keep[t]; ++dy)
          for (int dx = -1; dx <= 1 && keep[t]; ++dx) {
            if (occupied.count({c[0] + dx, c[1] + dy, c[2] + dz})) keep[t] = 0;
          }
    }
    const SemanticMesh kept = select_triangles(moved, keep);
    const auto base = static_cast<uint32_t>(out.mesh.vertices.size());
    out.mesh.vertices.insert(out.mesh.vertices.end(), kept.vertices.begin(), kept.vertices.end());
    out.mesh.class_id.insert(out.mesh.class_id.end(), kept.class_id.begin(), kept.class_id.end());
    out.mesh.instance_id.insert(out.mesh.instance_id.end(), kept.instance_id.begin(), kept.instance_id.end());
    out.mesh.rgb.insert(out.mesh.rgb.end(), kept.rgb.begin(), kept.rgb.end());
    for (auto t : kept.triangles) {
      for (auto& v : t) v += base;
      out.mesh.triangles.push_back(t);
    }
    mark(kept);
  }
  return out;
}

MergeManifest MergeManifest::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open merge manifest " + path.string());
  const auto dir = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : dir / fp;
  };
  MergeManifest m;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    const std::string where = path.string() + ":" + std::to_string(n);
    if (kind == "submap") {
      Entry e;
      std::string p;
      if (!(ls >> p >> e.first_scan >> e.last_scan) || e.last_scan < e.first_scan) {
        throw ConfigError(where + ": expected 'submap <path> <first> <last>'");
      }
      e.checkpoint = resolve(p);
      m.submaps.push_back(e);
    } else if (kind == "data") {
      std::string p;
      if (!(ls >> p)) throw ConfigError(where + ": missing data config path");
      m.data = resolve(p);
    } else if (kind == "output") {
      std::string p;
      if (!(ls >> p)) throw ConfigError(where + ": missing output path");
      m.output = resolve(p);
    } else {
      throw ConfigError(where + ": unknown directive '" + kind + "'");
    }
    std::string extra;
    if (ls >> extra) throw ConfigError(where + ": trailing text '" + extra + "'");
  }
  if (m.submaps.size() < 2) throw ConfigError(path.string() + ": at least two submaps required");
  if (m.output.empty()) throw ConfigError(path.string() + ": missing output");
  if (m.data.empty()) throw ConfigError(path.string() + ": missing data");
  for (size_t i = 1; i < m.submaps.size(); ++i) {
    if (m.overlap(i) < 1) throw ConfigError(path.string() + ": submaps " + std::to_string(i - 1) + " and " +
                                      std::to_string(i) + " do not overlap");
  }
  return m;
}

void MergeManifest::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "data " << data.string() << "\n";
  for (const auto& e : submaps) os << "submap " << e.checkpoint.string() << " " << e.first_scan << " " << e.last_scan << "\n";
  os << "output " << output.string() << "\n";
}

}  // namespace semap
