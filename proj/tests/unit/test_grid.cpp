#include <doctest.h>

#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "semap/error.hpp"
#include "semap/octree_grid.hpp"

using namespace semap;

namespace {

GridConfig small_config() {
  GridConfig c;
  c.leaf_size = 0.2;
  c.levels = 3;
  c.geo_dim = 4;
  c.sem_dim = 3;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_SUITE("octree_grid") {
  TEST_CASE("one point allocates 8 corners per level") {
    OctreeFeatureGrid g(small_config());
    const Vec3 p(0.05, 0.07, 0.11);
    CHECK(g.allocate_for_points(std::span(&p, 1)) == 24);
    CHECK(g.corner_count(0) == 8);
    CHECK(g.corner_count(1) == 8);
    CHECK(g.corner_count(2) == 8);
    CHECK(g.allocate_for_points(std::span(&p, 1)) == 0);
  }

  TEST_CASE("adjacent leaf voxels share a face") {
    OctreeFeatureGrid g(small_config());
    const std::vector<Vec3> pts{{0.05, 0.05, 0.05}, {0.25, 0.05, 0.05}};
    g.allocate_for_points(pts);
    // Oracle: set union of the two voxels' corner coordinates.
    std::set<std::tuple<int, int, int>> corners;
    for (const auto& p : pts) {
      const int bx = static_cast<int>(std::floor(p.x() / 0.2)), by = static_cast<int>(std::floor(p.y() / 0.2)),
                bz = static_cast<int>(std::floor(p.z() / 0.2));
      for (int c = 0; c < 8; ++c) corners.insert({bx + (c & 1), by + ((c >> 1) & 1), bz + ((c >> 2) & 1)});
    }
    CHECK(corners.size() == 12);
    CHECK(g.corner_count(0) == 12);
  }

  TEST_CASE("query at a corner returns that corner verbatim") {
    OctreeFeatureGrid g(small_config());
    const Vec3 p(0.1, 0.1, 0.1);
    g.allocate_for_points(std::span(&p, 1));
    const int64_t slot = g.find({0, 0, 0, 0});
    REQUIRE(slot >= 0);
    const auto f = g.query_level_feature(Vec3(0.0, 0.0, 0.0), 0, FeatureTable::geometry);
    REQUIRE(f);
    const auto c = g.features(FeatureTable::geometry, slot);
    for (int i = 0; i < 4; ++i) CHECK((*f)[i] == c[i]);
  }

  TEST_CASE("voxel center: constant field and coordinate field") {
    OctreeFeatureGrid g(small_config());
    const Vec3 center(0.1, 0.3, 0.5);
    g.allocate_for_points(std::span(&center, 1));
    const Stencil st = g.stencil(center, 0);
    REQUIRE(st.complete());
    for (int c = 0; c < 8; ++c) {
      auto f = g.features(FeatureTable::geometry, st.slots[c]);
      const VoxelKey k = g.key_of(st.slots[c]);
      f[0] = 2.5;
      f[1] = k.ix * 0.2;  // corner x-coordinate
    }
    const auto v = g.query_level_feature(center, 0, FeatureTable::geometry);
    REQUIRE(v);
    CHECK((*v)[0] == doctest::Approx(2.5).epsilon(1e-15));
    // Oracle: direct 8-term weighted sum.
    double oracle = 0.0;
    const Vec3 u = center / 0.2;
    for (int c = 0; c < 8; ++c) {
      const VoxelKey k = g.key_of(st.slots[c]);
      const double w = (1 - std::abs(u.x() - k.ix)) * (1 - std::abs(u.y() - k.iy)) * (1 - std::abs(u.z() - k.iz));
      oracle += w * k.ix * 0.2;
    }
    CHECK((*v)[1] == doctest::Approx(oracle).epsilon(1e-12));
    CHECK((*v)[1] == doctest::Approx(0.1).epsilon(1e-12));
  }

  TEST_CASE("concat order and zero fill") {
    OctreeFeatureGrid g(small_config());
    const Vec3 p(0.05, 0.05, 0.05);
    g.allocate_for_points(std::span(&p, 1));
    const auto a = g.query_level_feature(p, 2, FeatureTable::semantic);
    const auto b = g.query_level_feature(p, 1, FeatureTable::semantic);
    const auto c = g.query_level_feature(p, 0, FeatureTable::semantic);
    const auto all = g.query_concat(p, FeatureTable::semantic);
    REQUIRE(all);
    REQUIRE(all->size() == 9);
    for (int i = 0; i < 3; ++i) {
      CHECK((*all)[i] == (*a)[i]);
      CHECK((*all)[3 + i] == (*b)[i]);
      CHECK((*all)[6 + i] == (*c)[i]);
    }

    // A point whose coarsest voxel is missing: allocate levels 0 and 1 corners only.
    OctreeFeatureGrid h(small_config());
    const Vec3 q(0.05, 0.05, 0.05);
    const Stencil s0 = g.stencil(q, 0), s1 = g.stencil(q, 1);
    for (const Stencil* s : {&s0, &s1}) {
      for (int k = 0; k < 8; ++k) h.allocate_corner(g.key_of(s->slots[k]));
    }
    const auto partial = h.query_concat(q, FeatureTable::semantic);
    REQUIRE(partial);
    for (int i = 0; i < 3; ++i) CHECK((*partial)[i] == 0.0);
    CHECK(h.query_level_feature(q, 1, FeatureTable::semantic).has_value());
    CHECK_FALSE(h.query_concat(Vec3(5, 5, 5), FeatureTable::semantic).has_value());
  }

  TEST_CASE("interpolation weights equal finite-difference feature gradients") {
    OctreeFeatureGrid g(small_config());
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 0.39);
    for (int trial = 0; trial < 20; ++trial) {
      const Vec3 x(u(rng), u(rng), u(rng));
      g.allocate_for_points(std::span(&x, 1));
      for (int level = 0; level < 3; ++level) {
        const Stencil st = g.stencil(x, level);
        for (int c = 0; c < 8; ++c) {
          auto f = g.features(FeatureTable::geometry, st.slots[c]);
          const double keep = f[2];
          const double h = 1e-4;
          f[2] = keep + h;
          const double up = (*g.query_level_feature(x, level, FeatureTable::geometry))[2];
          f[2] = keep - h;
          const double dn = (*g.query_level_feature(x, level, FeatureTable::geometry))[2];
          f[2] = keep;
          CHECK((up - dn) / (2 * h) == doctest::Approx(st.weights[c]).epsilon(1e-6));
        }
      }
    }
  }

  TEST_CASE("weight spatial gradients match finite differences") {
    OctreeFeatureGrid g(small_config());
    const Vec3 x(0.13, 0.07, 0.31);
    g.allocate_for_points(std::span(&x, 1));
    const Stencil st = g.stencil(x, 0);
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
      Vec3 xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      const Stencil sp = g.stencil(xp, 0), sm = g.stencil(xm, 0);
      for (int c = 0; c < 8; ++c) {
        CHECK((sp.weights[c] - sm.weights[c]) / (2 * h) == doctest::Approx(st.weight_grads[c][a]).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("map cube counts") {
    GridConfig c = small_config();
    c.leaf_size = 0.1;
    c.levels = 1;
    {
      OctreeFeatureGrid g(c);
      g.allocate_corner({0, 0, 0, 0});
      g.allocate_corner({0, 100, 100, 100});
      CHECK(g.map_cube_counts(0.1) == CubeCounts{100, 100, 100});
      CHECK(g.map_cube_counts(10.0) == CubeCounts{1, 1, 1});
    }
    {
      c.leaf_size = 0.02;
      OctreeFeatureGrid g(c);
      g.allocate_corner({0, 0, 0, 0});
      g.allocate_corner({0, 157, 5, 50});  // 3.14 m, 0.1 m, 1.0 m
      CHECK(g.map_cube_counts(0.1) == CubeCounts{32, 1, 10});
    }
    OctreeFeatureGrid empty(c);
    CHECK_THROWS_AS(empty.map_cube_counts(0.1), EmptyMapError);
    CHECK_THROWS_AS(empty.map_cube_counts(0.0), ConfigError);
  }

  TEST_CASE("snapshot round trip is exact at f32 precision") {
    OctreeFeatureGrid g(small_config());
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-3, 3);
    std::vector<Vec3> pts;
    for (int i = 0; i < 50; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    g.allocate_for_points(pts);
    std::stringstream ss;
    g.save(ss);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "LNSF");
    const OctreeFeatureGrid h = OctreeFeatureGrid::load(ss);
    REQUIRE(h.corner_count() == g.corner_count());
    for (size_t s = 0; s < g.corner_count(); ++s) {
      const VoxelKey k = g.key_of(static_cast<int64_t>(s));
      const int64_t t = h.find(k);
      REQUIRE(t >= 0);
      for (int i = 0; i < 4; ++i) {
        CHECK(h.features(FeatureTable::geometry, t)[i] ==
              static_cast<double>(static_cast<float>(g.features(FeatureTable::geometry, static_cast<int64_t>(s))[i])));
      }
    }
    std::stringstream again;
    h.save(again);
    CHECK(again.str() == bytes);
  }

  TEST_CASE("corrupt snapshots are rejected") {
    std::stringstream bad("LNSX....");
    CHECK_THROWS_AS(OctreeFeatureGrid::load(bad), FormatError);
    OctreeFeatureGrid g(small_config());
    const Vec3 p(0.1, 0.1, 0.1);
    g.allocate_for_points(std::span(&p, 1));
    std::stringstream ss;
    g.save(ss);
    std::string s = ss.str();
    s.resize(s.size() - 3);
    std::stringstream cut(s);
    CHECK_THROWS_AS(OctreeFeatureGrid::load(cut), FormatError);
  }
}
