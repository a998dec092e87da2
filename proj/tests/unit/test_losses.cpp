#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "semap/error.hpp"
#include "semap/losses.hpp"
#include "semap/trainer.hpp"

using namespace semap;

namespace {

long double bce_oracle(long double pred, long double d, long double alpha) {
  const long double p = 1.0L / (1.0L + std::exp(-pred / alpha));
  const long double y = 1.0L / (1.0L + std::exp(-d / alpha));
  return -(y * std::log(p) + (1.0L - y) * std::log(1.0L - p));
}

struct Fixture {
  MapModel model;
  std::vector<LabeledScan> scans;
  std::vector<TrainingSample> batch;
  std::vector<uint8_t> things{0, 0, 1};

  explicit Fixture(bool panoptic = false) {
    GridConfig g;
    g.leaf_size = 0.2;
    g.levels = 2;
    g.geo_dim = 4;
    g.sem_dim = 6;
    model = MapModel::create(g, {16, 2}, 3, panoptic ? 4 : 0, 0.5, 3);
    scans.push_back(test::plane_scan(Vec3(0, 0, 1.5), 200, 2.0, 5, 1));
    auto car = test::plane_scan(Vec3(0, 0, 1.5), 60, 1.0, 6, 2);
    for (auto& p : car.endpoints) p.z() = 0.4;
    for (auto& i : car.instances) i = 2;
    scans.push_back(car);
    allocate_for_scans(model.grid, scans, 0.3);
    batch = BatchSampler(scans, {}, 1).build_batch(0, 1000);
  }
};

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("sdf BCE: oracle, minimum at the target, odd symmetry") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < 200; ++i) {
      const double p = u(rng), d = u(rng);
      const ScalarLoss l = sdf_bce(p, d, 0.05);
      CHECK(l.value == doctest::Approx(static_cast<double>(bce_oracle(p, d, 0.05L))).epsilon(1e-11));
      CHECK(l.value == doctest::Approx(sdf_bce(-p, -d, 0.05).value).epsilon(1e-12));
      const double h = 1e-7;
      const double fd = (sdf_bce(p + h, d, 0.05).value - sdf_bce(p - h, d, 0.05).value) / (2 * h);
      CHECK(l.grad == doctest::Approx(fd).epsilon(1e-6));
      CHECK(sdf_bce(d, d, 0.05).value <= l.value + 1e-15);
    }
    CHECK(std::abs(sdf_bce(0.1, 0.1, 0.05).grad) < 1e-14);
    // Far outside the logistic range the log floor engages and the value stays finite.
    const ScalarLoss far = sdf_bce(-100.0, 100.0, 0.05);
    CHECK(std::isfinite(far.value));
    CHECK(far.value == doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
  }

  TEST_CASE("eikonal on a linear field is 0, on a constant field 1") {
    GridConfig g;
    g.leaf_size = 0.25;
    g.levels = 1;
    g.geo_dim = 1;
    g.sem_dim = 1;
    MapModel m = MapModel::create(g, {4, 1}, 2, 0, 1.0, 1);
    const Vec3 c(0.4, 0.4, 0.4);
    m.grid.allocate_for_points(std::span(&c, 1));
    DenseLayer id;
    id.weight = Eigen::MatrixXd::Constant(1, 1, 1.0);
    id.bias = Eigen::VectorXd::Zero(1);
    m.gnf = Mlp::from_layers({id});
    const std::vector<Vec3> xs{{0.3, 0.3, 0.3}, {0.31, 0.45, 0.26}, {0.49, 0.26, 0.4}};
    for (size_t s = 0; s < m.grid.corner_count(); ++s) {
      m.grid.features(FeatureTable::geometry, static_cast<int64_t>(s))[0] = 0.0;
    }
    CHECK(eikonal_loss(m, xs) == doctest::Approx(1.0));
    for (size_t s = 0; s < m.grid.corner_count(); ++s) {
      const VoxelKey k = m.grid.key_of(static_cast<int64_t>(s));
      m.grid.features(FeatureTable::geometry, static_cast<int64_t>(s))[0] = 0.25 * (0.6 * k.ix + 0.8 * k.iz);
    }
    CHECK(std::abs(eikonal_loss(m, xs)) < 1e-12);
    const auto grad = sdf_spatial_gradient(m, xs[1]);
    REQUIRE(grad);
    CHECK((*grad - Vec3(0.6, 0.0, 0.8)).norm() < 1e-12);
    CHECK(eikonal_value(Vec3(3, 4, 0)) == 4.0);
  }

  TEST_CASE("analytic spatial gradient matches finite differences") {
    Fixture f;
    std::mt19937_64 rng(3);
    for (auto& v : f.model.grid.raw(FeatureTable::geometry)) v = std::normal_distribution<double>(0, 0.3)(rng);
    int checked = 0;
    for (size_t i = 0; i < f.batch.size() && checked < 30; i += 17) {
      const Vec3 x = f.batch[i].x;
      const auto g = sdf_spatial_gradient(f.model, x);
      if (!g) continue;
      Vec3 fd;
      bool ok = true;
      for (int a = 0; a < 3 && ok; ++a) {
        const double h = 1e-6;
        Vec3 xp = x, xm = x;
        xp[a] += h;
        xm[a] -= h;
        const auto up = f.model.sdf(xp), dn = f.model.sdf(xm);
        ok = up && dn;
        if (ok) fd[a] = (*up - *dn) / (2 * h);
      }
      if (!ok) continue;
      ++checked;
      CHECK((*g - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
    }
    CHECK(checked >= 20);
  }

  TEST_CASE("cross entropy values and gradient") {
    const std::vector<double> uniform(5, 0.7);
    std::vector<double> g(5);
    CHECK(cross_entropy(uniform, 2, g) == doctest::Approx(std::log(5.0)));
    double sum = 0;
    for (double v : g) sum += v;
    CHECK(std::abs(sum) < 1e-15);
    CHECK(g[2] == doctest::Approx(0.2 - 1.0));
    CHECK_THROWS_AS(cross_entropy(uniform, 5), ContractError);
    const std::vector<std::vector<double>> batch{{0.0, 0.0}, {0.0, 0.0}};
    const std::vector<int> t{0, 1};
    CHECK(semantic_loss(batch, t) == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("instance targets: things keep their id, stuff maps to 0") {
    CHECK(instance_target(true, 3) == 3);
    CHECK(instance_target(false, 3) == 0);
    CHECK(cross_entropy(std::vector<double>{1.5, 1.5}, instance_target(false, 9)) == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("forgetting penalty hand case") {
    const std::vector<double> beta{1.0, 2.0, 0.0}, live{1.3, 5.0, 9.0}, prev{1.0, 5.0, -9.0};
    CHECK(weighted_drift(beta, live, prev) == doctest::Approx(0.09).epsilon(1e-14));
    CHECK_THROWS_AS(weighted_drift(beta, live, std::vector<double>{1.0}), ContractError);
  }

  TEST_CASE("importance accumulates |g|, caps at beta_max and activates on commit") {
    Fixture f;
    ImportanceStore st = ImportanceStore::create(f.model);
    ObjectiveContext ctx;
    ctx.weights = LossWeights::defaults_for(MapMode::batch_semantic);
    ModelGradient g = ModelGradient::zeros_like(f.model), l1 = ModelGradient::zeros_like(f.model);
    total_loss(f.model, f.batch, ctx, &g, &l1);
    const auto flat = flatten(l1.gnf);
    st.update_importance(l1, 1e9, f.model);
    st.update_importance(l1, 1e9, f.model);
    for (size_t i = 0; i < flat.size(); ++i) CHECK(st.gnf.beta_next[i] == doctest::Approx(2 * std::abs(flat[i])));
    for (double b : st.gnf.beta) CHECK(b == 0.0);
    CHECK(forgetting_loss(f.model, st) == 0.0);

    ImportanceStore capped = ImportanceStore::create(f.model);
    for (int i = 0; i < 5; ++i) capped.update_importance(l1, 1e-6, f.model);
    for (double b : capped.gnf.beta_next) CHECK(b <= 1e-6);

    st.commit(f.model);
    CHECK(st.gnf.beta == st.gnf.beta_next);
    CHECK(forgetting_loss(f.model, st) == 0.0);
    // Move one decoder weight and compare to the hand formula.
    const size_t k = 0;
    f.model.gnf.mutable_layers()[0].weight(0, 0) += 0.5;  // first entry of the flattened layout
    CHECK(forgetting_loss(f.model, st) == doctest::Approx(st.gnf.beta[k] * 0.25));
  }

  TEST_CASE("zero weights reduce the objective to the SDF term; terms combine linearly") {
    Fixture f(true);
    ObjectiveContext ctx;
    ctx.mode = MapMode::batch_panoptic;
    ctx.thing_classes = f.things;
    ctx.weights = LossWeights::defaults_for(ctx.mode);
    const LossTerms full = total_loss(f.model, f.batch, ctx);
    CHECK(full.l1 > 0);
    CHECK(full.l2 > 0);
    CHECK(full.l4 > 0);
    CHECK(full.l5 > 0);
    CHECK(full.total == doctest::Approx(full.l1 + 0.3 * full.l2 + full.l4 + full.l5).epsilon(1e-13));

    ObjectiveContext zero = ctx;
    zero.weights.lambda2 = zero.weights.lambda4 = zero.weights.lambda5 = 0.0;
    ModelGradient gz = ModelGradient::zeros_like(f.model), gl1 = ModelGradient::zeros_like(f.model);
    const LossTerms z = total_loss(f.model, f.batch, zero, &gz, &gl1);
    CHECK(z.total == doctest::Approx(full.l1).epsilon(1e-14));
    CHECK(flatten(gz.gnf) == flatten(gl1.gnf));
    for (double v : flatten(gz.snf)) CHECK(v == 0.0);

    // grad(a + b) = grad(a) + grad(b) for the decoder gradients.
    ObjectiveContext a = zero, b = zero;
    a.weights.lambda4 = 1.0;
    b.weights.lambda5 = 2.0;
    ObjectiveContext ab = zero;
    ab.weights.lambda4 = 1.0;
    ab.weights.lambda5 = 2.0;
    ModelGradient ga = ModelGradient::zeros_like(f.model), gb = ga, gab = ga;
    total_loss(f.model, f.batch, a, &ga);
    total_loss(f.model, f.batch, b, &gb);
    total_loss(f.model, f.batch, ab, &gab);
    ga.add_scaled(gb, 1.0);
    ga.add_scaled(gz, -1.0);
    const auto x = flatten(ga.snf), y = flatten(gab.snf);
    for (size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x[i] - y[i]) < 1e-12);
    const auto xi = flatten(ga.instance), yi = flatten(gab.instance);
    for (size_t i = 0; i < xi.size(); ++i) CHECK(std::abs(xi[i] - yi[i]) < 1e-12);
  }

  TEST_CASE("weight validation per mode") {
    LossWeights w = LossWeights::defaults_for(MapMode::batch_semantic);
    CHECK_NOTHROW(w.validate(MapMode::batch_semantic));
    w.lambda3 = 1.0;
    CHECK_THROWS_AS(w.validate(MapMode::batch_semantic), ConfigError);
    CHECK_NOTHROW(w.validate(MapMode::incremental_semantic));
    w.lambda5 = 0.5;
    CHECK_THROWS_AS(w.validate(MapMode::incremental_semantic), ConfigError);
    CHECK_NOTHROW(w.validate(MapMode::incremental_panoptic));
    w.lambda2 = -1;
    CHECK_THROWS_AS(w.validate(MapMode::incremental_panoptic), ConfigError);
  }
}
