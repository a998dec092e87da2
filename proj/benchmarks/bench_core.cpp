#include <benchmark/benchmark.h>

#include <random>

#include "semap/mlp.hpp"
#include "semap/morton.hpp"
#include "semap/octree_grid.hpp"
#include "semap/spatial_hash.hpp"

using namespace semap;

namespace {

std::vector<Vec3> random_points(size_t n, double extent, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-extent, extent);
  std::vector<Vec3> p(n);
  for (auto& v : p) v = Vec3(u(rng), u(rng), u(rng) * 0.1);
  return p;
}

void BM_MortonRoundTrip(benchmark::State& state) {
  int32_t i = 0;
  for (auto _ : state) {
    const uint64_t c = morton::encode(i & 1023, (i >> 3) & 1023, (i >> 6) & 1023);
    benchmark::DoNotOptimize(morton::decode(c));
    ++i;
  }
}
BENCHMARK(BM_MortonRoundTrip);

void BM_QueryConcat(benchmark::State& state) {
  OctreeFeatureGrid grid;
  const auto pts = random_points(20000, 20.0, 1);
  grid.allocate_for_points(pts);
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(grid.query_concat(pts[i++ % pts.size()], FeatureTable::semantic));
  }
}
BENCHMARK(BM_QueryConcat);

void BM_MlpForward(benchmark::State& state) {
  const Mlp mlp(24, {32, 32}, 1, 3);
  const Eigen::MatrixXd in = Eigen::MatrixXd::Random(24, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mlp_forward(mlp, in));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(512)->Arg(4096);

void BM_NearestNeighbor(benchmark::State& state) {
  const auto pts = random_points(static_cast<size_t>(state.range(0)), 30.0, 2);
  const PointIndex index(pts, 0.2);
  const auto queries = random_points(1024, 30.0, 3);
  size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(index.nearest(queries[i++ & 1023]));
}
BENCHMARK(BM_NearestNeighbor)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
