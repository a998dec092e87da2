#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "helpers.hpp"
#include "semap/evaluator.hpp"
#include "semap/spatial_hash.hpp"

using namespace semap;

namespace {

SemanticMesh two_triangles() {
  SemanticMesh m;
  // Areas 0.5 and 1.5.
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 0, 0}, {8, 0, 0}, {5, 1, 0}};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};
  m.class_id = {1, 1, 2, 2, 2, 1};
  m.instance_id = {0, 0, 0, 4, 4, 4};
  m.rgb.assign(6, {0, 0, 0});
  return m;
}

LabeledPoints random_points(std::mt19937_64& rng, size_t n, int classes, double extent) {
  LabeledPoints p;
  std::uniform_int_distribution<int> c(1, classes);
  for (size_t i = 0; i < n; ++i) {
    p.points.push_back(test::random_vec(rng, 0, extent));
    p.class_id.push_back(static_cast<uint16_t>(c(rng)));
    p.instance_id.push_back(0);
  }
  return p;
}

double brute_class_nn(const LabeledPoints& to, const Vec3& q, uint16_t cls) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < to.size(); ++j) {
    if (to.class_id[j] == cls) best = std::min(best, (to.points[j] - q).norm());
  }
  return best;
}

}  // namespace

TEST_SUITE("evaluator") {
  TEST_CASE("surface samples lie on their triangles and carry the majority class") {
    const auto m = two_triangles();
    const LabeledPoints s = sample_surface(m, 4000, 3);
    REQUIRE(s.size() == 4000);
    size_t small = 0;
    for (size_t i = 0; i < s.size(); ++i) {
      const Vec3& p = s.points[i];
      CHECK(p.z() == 0.0);
      if (p.x() < 2.0) {
        ++small;
        CHECK(p.x() >= 0.0);
        CHECK(p.y() >= 0.0);
        CHECK(p.x() + p.y() <= 1.0 + 1e-12);
        CHECK(s.class_id[i] == 1);
        CHECK(s.instance_id[i] == 0);
      } else {
        CHECK(p.x() >= 5.0);
        CHECK(p.y() >= 0.0);
        CHECK((p.x() - 5.0) / 3.0 + p.y() <= 1.0 + 1e-12);
        CHECK(s.class_id[i] == 2);
        CHECK(s.instance_id[i] == 4);
      }
    }
    // Area ratio 1:3, binomial 3-sigma band.
    const double mean = 1000.0, sd = std::sqrt(4000 * 0.25 * 0.75);
    CHECK(std::abs(static_cast<double>(small) - mean) < 3 * sd);
  }

  TEST_CASE("sampling is reproducible from the seed") {
    const auto m = two_triangles();
    const auto a = sample_surface(m, 500, 9), b = sample_surface(m, 500, 9), c = sample_surface(m, 500, 10);
    CHECK(a.points == b.points);
    CHECK(a.points != c.points);
  }

  TEST_CASE("semantic chamfer hand example") {
    LabeledPoints r, t;
    r.points = {{0, 0, 0}, {1, 0, 0}, {9, 9, 9}};
    r.class_id = {1, 2, 3};
    t.points = {{0, 0.1, 0}, {0, 0, 0}};
    t.class_id = {1, 2};
    r.instance_id.assign(3, 0);
    t.instance_id.assign(2, 0);
    const ScdResult s = scd(r, t);
    CHECK(s.accuracy == doctest::Approx(0.55));
    CHECK(s.completion == doctest::Approx(0.55));
    CHECK(s.chamfer == doctest::Approx(0.55));
    CHECK(s.r_used == 2);
    REQUIRE(s.classes.size() == 3);
    CHECK_FALSE(s.classes[2].in_aggregate);
    const auto d = directed_class_distances(r, t);
    CHECK(std::isnan(d[2]));
  }

  TEST_CASE("semantic chamfer equals brute force on random sets") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
      const LabeledPoints r = random_points(rng, 200, 3, 2.0), t = random_points(rng, 150, 3, 2.0);
      const auto d = directed_class_distances(r, t);
      double sum = 0;
      for (size_t i = 0; i < r.size(); ++i) {
        const double ref = brute_class_nn(t, r.points[i], r.class_id[i]);
        CHECK(d[i] == ref);
        sum += ref;
      }
      CHECK(scd(r, t).accuracy == doctest::Approx(sum / 200).epsilon(1e-12));
    }
  }

  TEST_CASE("uniform labels reduce to plain chamfer") {
    std::mt19937_64 rng(2);
    LabeledPoints r = random_points(rng, 300, 1, 3.0), t = random_points(rng, 400, 1, 3.0);
    const MetricReport a = reconstruction_metrics(r, t, 0.1, true);
    const MetricReport b = reconstruction_metrics(r, t, 0.1, false);
    CHECK(std::abs(a.chamfer_l1_cm - b.chamfer_l1_cm) < 1e-12);
    CHECK(a.f_score == b.f_score);
  }

  TEST_CASE("identical sets and half-tau shifts") {
    std::mt19937_64 rng(5);
    const LabeledPoints r = random_points(rng, 100, 2, 50.0);
    const MetricReport same = reconstruction_metrics(r, r, 0.1);
    CHECK(same.chamfer_l1_cm == 0.0);
    CHECK(same.precision == 100.0);
    CHECK(same.f_score == 100.0);

    // Sparse points (tens of meters apart) shifted by tau/2: every distance is exactly the shift.
    LabeledPoints t = r;
    for (auto& p : t.points) p.x() += 0.05;
    const MetricReport at = reconstruction_metrics(r, t, 0.1);
    CHECK(at.completion_cm == doctest::Approx(5.0));
    CHECK(at.accuracy_cm == doctest::Approx(5.0));
    CHECK(at.recall == 100.0);
    const MetricReport below = reconstruction_metrics(r, t, 0.025);
    CHECK(below.recall == 0.0);
    CHECK(below.f_score == 0.0);
    // Larger tau never lowers the completion ratio.
    double prev = -1;
    for (double tau : {0.01, 0.05, 0.1, 0.2}) {
      const double c = reconstruction_metrics(r, t, tau).completion_ratio;
      CHECK(c >= prev);
      prev = c;
    }
  }
}

TEST_SUITE("spatial_hash") {
  TEST_CASE("nearest, knn and radius equal brute force including ties") {
    std::mt19937_64 rng(4);
    std::vector<Vec3> pts;
    std::uniform_int_distribution<int> g(0, 20);
    for (int i = 0; i < 2000; ++i) pts.emplace_back(0.1 * g(rng), 0.1 * g(rng), 0.1 * g(rng));  // many duplicates
    const PointIndex idx(pts, 0.25);
    for (int q = 0; q < 300; ++q) {
      const Vec3 x = test::random_vec(rng, -0.5, 2.5);
      const auto a = idx.nearest(x);
      const auto b = brute_force_nearest(pts, x);
      REQUIRE(a);
      CHECK(a->index == b->index);
      CHECK(a->distance == b->distance);

      std::vector<std::pair<double, uint32_t>> all;
      for (uint32_t i = 0; i < pts.size(); ++i) all.emplace_back((pts[i] - x).norm(), i);
      std::sort(all.begin(), all.end());
      const auto k = idx.knn(x, 7);
      REQUIRE(k.size() == 7);
      for (size_t i = 0; i < 7; ++i) {
        CHECK(k[i].index == all[i].second);
        CHECK(k[i].distance == all[i].first);
      }
      const auto rad = idx.radius(x, 0.3);
      std::vector<uint32_t> ref;
      for (uint32_t i = 0; i < pts.size(); ++i) {
        if ((pts[i] - x).norm() <= 0.3) ref.push_back(i);
      }
      CHECK(rad == ref);
    }
    CHECK_FALSE(PointIndex({}, 1.0).nearest(Vec3::Zero()));
  }
}
