#include "semap/marching_cubes.hpp"

#include <algorithm>
#include <unordered_map>

#include "mc_tables.hpp"
#include "semap/error.hpp"
#include "semap/parallel.hpp"

namespace semap {
namespace {

constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};
constexpr std::array<std::array<int, 2>, 12> kEdge = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

struct BlockResult {
  std::vector<uint64_t> keys;  // vertex keys in first-use order
  std::vector<Vec3> positions;
  std::vector<std::array<uint32_t, 3>> triangles;  // local indices
};

struct Extractor {
  const CubeLattice& lat;
  const ScalarField& field;
  double iso;
  std::array<uint64_t, 3> corners;  // corner counts per axis

  uint64_t corner_id(int64_t x, int64_t y, int64_t z) const {
    return (static_cast<uint64_t>(z) * corners[1] + static_cast<uint64_t>(y)) * corners[0] + static_cast<uint64_t>(x);
  }
  Vec3 position(int64_t x, int64_t y, int64_t z) const {
    return lat.origin + lat.cube_size * Vec3(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z));
  }

  void run(const std::array<int64_t, 3>& lo, const std::array<int64_t, 3>& hi, BlockResult& out) const {
    const int64_t sx = hi[0] - lo[0] + 1, sy = hi[1] - lo[1] + 1, sz = hi[2] - lo[2] + 1;
    const auto n = static_cast<size_t>(sx * sy * sz);
    std::vector<Vec3> xs(n);
    auto local = [&](int64_t x, int64_t y, int64_t z) {
      return static_cast<size_t>(((z - lo[2]) * sy + (y - lo[1])) * sx + (x - lo[0]));
    };
    for (int64_t z = lo[2]; z <= hi[2]; ++z)
      for (int64_t y = lo[1]; y <= hi[1]; ++y)
        for (int64_t x = lo[0]; x <= hi[0]; ++x) xs[local(x, y, z)] = position(x, y, z);
    std::vector<double> values(n, 0.0);
    std::vector<uint8_t> valid(n, 0);
    field(xs, values, valid);

    std::unordered_map<uint64_t, uint32_t> index;
    auto vertex = [&](uint64_t key, const Vec3& p) {
      auto [it, inserted] = index.try_emplace(key, static_cast<uint32_t>(out.keys.size()));
      if (inserted) {
        out.keys.push_back(key);
        out.positions.push_back(p);
      }
      return it->second;
    };

    for (int64_t z = lo[2]; z < hi[2]; ++z) {
      for (int64_t y = lo[1]; y < hi[1]; ++y) {
        for (int64_t x = lo[0]; x < hi[0]; ++x) {
          std::array<double, 8> v;
          std::array<size_t, 8> li;
          bool ok = true;
          int cube = 0;
          for (int c = 0; c < 8; ++c) {
            li[c] = local(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]);
            if (!valid[li[c]]) {
              ok = false;
              break;
            }
            v[c] = values[li[c]];
            if (v[c] < iso) cube |= 1 << c;
          }
          if (!ok || mc_tables::kEdgeTable[cube] == 0) continue;

          std::array<uint32_t, 12> ev{};
          for (int e = 0; e < 12; ++e) {
            if (!(mc_tables::kEdgeTable[cube] & (1 << e))) continue;
            const int a = kEdge[e][0], b = kEdge[e][1];
            const double mu = (iso - v[a]) / (v[b] - v[a]);
            const auto ca = kCorner[a], cb = kCorner[b];
            const uint64_t ida = corner_id(x + ca[0], y + ca[1], z + ca[2]);
            const uint64_t idb = corner_id(x + cb[0], y + cb[1], z + cb[2]);
            // Vertex on a lattice corner is shared by every edge touching it.
            if (mu <= 0.0) {
              ev[e] = vertex(ida * 4 + 3, xs[li[a]]);
            } else if (mu >= 1.0) {
              ev[e] = vertex(idb * 4 + 3, xs[li[b]]);
            } else {
              const uint64_t lo_id = std::min(ida, idb);
              const int axis = ca[0] != cb[0] ? 0 : (ca[1] != cb[1] ? 1 : 2);
              ev[e] = vertex(lo_id * 4 + static_cast<uint64_t>(axis), xs[li[a]] + mu * (xs[li[b]] - xs[li[a]]));
            }
          }
          const int* tri = mc_tables::kTriTable[cube];
          for (int t = 0; tri[t] != -1; t += 3) {
            // Table winding faces the inside (f < iso); reverse it to face free space.
            out.triangles.push_back({ev[tri[t]], ev[tri[t + 2]], ev[tri[t + 1]]});
          }
        }
      }
    }
  }
};

}  // namespace

double triangle_area(const TriangleMesh& mesh, size_t t) {
  const auto& f = mesh.triangles[t];
  return 0.5 * (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]).norm();
}

Vec3 triangle_normal(const TriangleMesh& mesh, size_t t) {
  const auto& f = mesh.triangles[t];
  const Vec3 n = (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

TriangleMesh marching_cubes(const CubeLattice& lattice, const ScalarField& field, double iso, int block) {
  if (!(lattice.cube_size > 0.0)) throw ConfigError("marching cubes: cube size must be positive");
  if (block < 1) throw ConfigError("marching cubes: block size must be positive");
  TriangleMesh mesh;
  for (int64_t c : lattice.counts) {
    if (c <= 0) return mesh;
  }
  Extractor ex{lattice, field, iso, {}};
  for (int a = 0; a < 3; ++a) ex.corners[a] = static_cast<uint64_t>(lattice.counts[a]) + 1;

  std::array<int64_t, 3> nb;
  for (int a = 0; a < 3; ++a) nb[a] = (lattice.counts[a] + block - 1) / block;
  const auto blocks = static_cast<size_t>(nb[0] * nb[1] * nb[2]);
  std::vector<BlockResult> results(blocks);
  parallel_for(blocks, [&](size_t b) {
    const auto i = static_cast<int64_t>(b);
    const std::array<int64_t, 3> id{i % nb[0], (i / nb[0]) % nb[1], i / (nb[0] * nb[1])};
    std::array<int64_t, 3> lo, hi;
    for (int a = 0; a < 3; ++a) {
      lo[a] = id[a] * block;
      hi[a] = std::min(lattice.counts[a], lo[a] + block);
    }
    ex.run(lo, hi, results[b]);
  });

  std::unordered_map<uint64_t, uint32_t> global;
  for (BlockResult& r : results) {
    std::vector<uint32_t> remap(r.keys.size());
    for (size_t k = 0; k < r.keys.size(); ++k) {
      auto [it, inserted] = global.try_emplace(r.keys[k], static_cast<uint32_t>(mesh.vertices.size()));
      if (inserted) mesh.vertices.push_back(r.positions[k]);
      remap[k] = it->second;
    }
    for (const auto& t : r.triangles) {
      const std::array<uint32_t, 3> g{remap[t[0]], remap[t[1]], remap[t[2]]};
      if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
      mesh.triangles.push_back(g);
      if (triangle_area(mesh, mesh.triangles.size() - 1) < 1e-12) mesh.triangles.pop_back();
    }
    r = {};
  }

  // Drop vertices left unreferenced by removed degenerate triangles.
  std::vector<uint32_t> used(mesh.vertices.size(), UINT32_MAX);
  std::vector<Vec3> kept;
  for (auto& t : mesh.triangles) {
    for (auto& i : t) {
      if (used[i] == UINT32_MAX) {
        used[i] = static_cast<uint32_t>(kept.size());
        kept.push_back(mesh.vertices[i]);
      }
      i = used[i];
    }
  }
  mesh.vertices = std::move(kept);
  return mesh;
}

}  // namespace semap
