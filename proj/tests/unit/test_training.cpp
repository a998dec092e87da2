#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "semap/error.hpp"
#include "semap/trainer.hpp"

using namespace semap;

namespace {

MapModel small_model(int instances = 0) {
  GridConfig g;
  g.leaf_size = 0.2;
  g.levels = 2;
  g.geo_dim = 4;
  g.sem_dim = 6;
  g.seed = 2;
  return MapModel::create(g, {16, 2}, 3, instances, 0.5, 2);
}

TrainConfig quick(int steps) {
  TrainConfig c;
  c.batch_steps = steps;
  c.rays_per_step = 256;
  c.seed = 5;
  c.feature_adam.lr = 1e-2;
  c.decoder_adam.lr = 1e-2;
  return c;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("a plane is learned to within 5 cm") {
    const std::vector<LabeledScan> scans{test::plane_scan(Vec3(0, 0, 1.5), 3000, 3.0, 1),
                                         test::plane_scan(Vec3(0.5, 0.5, 1.5), 3000, 3.0, 2)};
    MapModel m = small_model();
    const TrainResult r = train(scans, m, quick(500), {0, 0, 1});
    REQUIRE(r.history.size() == 500);
    CHECK(r.history.back().terms.l1 < r.history.front().terms.l1);
    double sum = 0;
    int n = 0;
    for (double x = -1.5; x <= 1.5; x += 0.1) {
      for (double y = -1.5; y <= 1.5; y += 0.1) {
        const auto f = m.sdf(Vec3(x, y, 0.0));
        if (!f) continue;
        sum += std::abs(*f);
        ++n;
      }
    }
    REQUIRE(n > 500);
    CHECK(sum / n < 0.05);
  }

  TEST_CASE("two classes separated by x are labeled above 95 %") {
    LabeledScan s = test::plane_scan(Vec3(0, 0, 1.5), 6000, 3.0, 3);
    for (size_t i = 0; i < s.size(); ++i) s.labels[i] = s.endpoints[i].x() < 0 ? 1 : 2;
    const std::vector<LabeledScan> scans{s};
    MapModel m = small_model();
    train(scans, m, quick(400), {0, 0, 0});
    int ok = 0, n = 0;
    for (double x = -2.4; x <= 2.4; x += 0.1) {
      if (std::abs(x) < 0.25) continue;  // one finest voxel of transition
      for (double y = -2.4; y <= 2.4; y += 0.2) {
        const auto f = m.grid.query_concat(Vec3(x, y, 0), FeatureTable::semantic);
        if (!f) continue;
        const auto out = mlp_forward(m.snf, Eigen::Map<const Eigen::VectorXd>(f->data(), m.semantic_split));
        const int cls = argmax(std::span<const double>(out.data(), 3));
        ok += cls == (x < 0 ? 1 : 2);
        ++n;
      }
    }
    REQUIRE(n > 300);
    CHECK(static_cast<double>(ok) / n > 0.95);
  }

  TEST_CASE("non-finite state raises TrainingError") {
    const std::vector<LabeledScan> scans{test::plane_scan(Vec3(0, 0, 1.5), 500, 2.0, 4)};
    MapModel m = small_model();
    m.gnf.mutable_layers()[0].bias[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train(scans, m, quick(5), {0, 0, 1}), TrainingError);
  }

  TEST_CASE("incremental mode commits importance at scan boundaries") {
    const std::vector<LabeledScan> scans{test::plane_scan(Vec3(0, 0, 1.5), 800, 2.0, 5),
                                         test::plane_scan(Vec3(2, 0, 1.5), 800, 2.0, 6)};
    MapModel m = small_model();
    TrainConfig c = quick(0);
    c.mode = MapMode::incremental_semantic;
    c.weights = LossWeights::defaults_for(c.mode);
    c.steps_per_scan = 20;
    const TrainResult r = train(scans, m, c, {0, 0, 1});
    REQUIRE(r.history.size() == 40);
    // No importance exists during the first scan.
    for (int i = 0; i < 20; ++i) CHECK(r.history[static_cast<size_t>(i)].terms.l3 == 0.0);
    double later = 0;
    for (int i = 21; i < 40; ++i) later += r.history[static_cast<size_t>(i)].terms.l3;
    CHECK(later > 0.0);
  }

  TEST_CASE("loss csv layout") {
    std::vector<LossRecord> h(2);
    h[0].step = 0;
    h[0].terms.l1 = 0.5;
    h[0].terms.total = 0.1 + 0.2;
    h[1].step = 1;
    const auto path = std::filesystem::temp_directory_path() / "semap_loss_test.csv";
    write_loss_csv(path, h);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "step,L1,L2,L3,L4,L5,total");
    CHECK(row.rfind("0,0.5,0,0,0,0,", 0) == 0);
    CHECK(std::stod(row.substr(row.rfind(',') + 1)) == 0.1 + 0.2);
    std::filesystem::remove(path);
  }
}
