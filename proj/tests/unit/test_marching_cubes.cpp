#include <doctest.h>

#include <map>
#include <utility>

#include "semap/marching_cubes.hpp"

using namespace semap;

namespace {

ScalarField analytic(std::function<double(const Vec3&)> f) {
  return [f](std::span<const Vec3> xs, std::span<double> v, std::span<uint8_t> ok) {
    for (size_t i = 0; i < xs.size(); ++i) {
      v[i] = f(xs[i]);
      ok[i] = 1;
    }
  };
}

CubeLattice box(double lo, double hi, double s) {
  CubeLattice l;
  l.origin = Vec3::Constant(lo);
  l.cube_size = s;
  const auto n = static_cast<int64_t>(std::llround((hi - lo) / s));
  l.counts = {n, n, n};
  return l;
}

std::map<std::pair<uint32_t, uint32_t>, int> edge_use(const TriangleMesh& m) {
  std::map<std::pair<uint32_t, uint32_t>, int> e;
  for (const auto& t : m.triangles) {
    for (int k = 0; k < 3; ++k) {
      const uint32_t a = t[k], b = t[(k + 1) % 3];
      ++e[{std::min(a, b), std::max(a, b)}];
    }
  }
  return e;
}

}  // namespace

TEST_SUITE("marching_cubes") {
  TEST_CASE("sphere: accurate, closed, genus 0, outward") {
    const double r = 0.73;
    const TriangleMesh m =
        marching_cubes(box(-1.0, 1.0, 0.05), analytic([r](const Vec3& x) { return x.norm() - r; }), 0.0, 16);
    REQUIRE(!m.empty());
    for (const auto& v : m.vertices) CHECK(std::abs(v.norm() - r) < 5e-3);
    const auto edges = edge_use(m);
    bool watertight = true;
    for (const auto& [e, n] : edges) watertight = watertight && n == 2;
    CHECK(watertight);
    const long euler = static_cast<long>(m.vertices.size()) - static_cast<long>(edges.size()) +
                       static_cast<long>(m.triangles.size());
    CHECK(euler == 2);
    size_t outward = 0;
    for (size_t t = 0; t < m.triangles.size(); ++t) {
      const auto& tri = m.triangles[t];
      const Vec3 c = (m.vertices[tri[0]] + m.vertices[tri[1]] + m.vertices[tri[2]]) / 3.0;
      outward += triangle_normal(m, t).dot(c) > 0.0;
    }
    CHECK(outward == m.triangles.size());
  }

  TEST_CASE("strictly positive field yields nothing") {
    const TriangleMesh m = marching_cubes(box(0, 1, 0.1), analytic([](const Vec3&) { return 0.5; }));
    CHECK(m.triangles.empty());
    CHECK(m.vertices.empty());
  }

  TEST_CASE("plane between lattice nodes is reproduced exactly") {
    const double z0 = 0.337;
    const TriangleMesh m = marching_cubes(box(0, 1, 0.1), analytic([z0](const Vec3& x) { return x.z() - z0; }));
    REQUIRE(!m.empty());
    double area = 0;
    for (const auto& v : m.vertices) CHECK(std::abs(v.z() - z0) < 1e-6);
    for (size_t t = 0; t < m.triangles.size(); ++t) {
      area += triangle_area(m, t);
      CHECK(triangle_normal(m, t).z() == doctest::Approx(1.0));
    }
    CHECK(area == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("invalid corners suppress their cubes") {
    ScalarField half = [](std::span<const Vec3> xs, std::span<double> v, std::span<uint8_t> ok) {
      for (size_t i = 0; i < xs.size(); ++i) {
        v[i] = xs[i].z() - 0.45;
        ok[i] = xs[i].x() < 0.5 + 1e-9;
      }
    };
    const TriangleMesh m = marching_cubes(box(0, 1, 0.1), half);
    REQUIRE(!m.empty());
    for (const auto& v : m.vertices) CHECK(v.x() <= 0.5 + 1e-9);
  }

  TEST_CASE("block size does not change the result") {
    const auto f = analytic([](const Vec3& x) { return (x - Vec3(0.1, -0.2, 0.05)).norm() - 0.6; });
    const TriangleMesh a = marching_cubes(box(-1, 1, 0.1), f, 0.0, 3);
    const TriangleMesh b = marching_cubes(box(-1, 1, 0.1), f, 0.0, 64);
    CHECK(a.vertices.size() == b.vertices.size());
    CHECK(a.triangles.size() == b.triangles.size());
    double sa = 0, sb = 0;
    for (size_t t = 0; t < a.triangles.size(); ++t) sa += triangle_area(a, t);
    for (size_t t = 0; t < b.triangles.size(); ++t) sb += triangle_area(b, t);
    CHECK(sa == doctest::Approx(sb).epsilon(1e-12));
  }
}
