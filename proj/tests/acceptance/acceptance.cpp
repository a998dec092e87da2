// Acceptance checks 1-10: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: semap_acceptance [criterion ids, e.g. 1 2 9]

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "semap/evaluator.hpp"
#include "semap/morton.hpp"
#include "semap/octree_grid.hpp"
#include "semap/spatial_hash.hpp"
#include "semap/suites.hpp"
#include "semap/trainer.hpp"

using namespace semap;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

struct Outcome {
  bool passed = false;
  std::string detail;
};

// --- 1: gradients ------------------------------------------------------------

double& mlp_param(Mlp& mlp, size_t k) {
  for (auto& l : mlp.mutable_layers()) {
    const auto nw = static_cast<size_t>(l.weight.size());
    if (k < nw) return l.weight.data()[k];
    k -= nw;
    const auto nb = static_cast<size_t>(l.bias.size());
    if (k < nb) return l.bias[static_cast<Eigen::Index>(k)];
    k -= nb;
  }
  throw std::out_of_range("mlp parameter");
}

struct GradProblem {
  MapModel model;
  std::vector<LabeledScan> scans;
  std::vector<TrainingSample> batch;
  ImportanceStore store;
  ObjectiveContext base;
};

GradProblem make_problem(std::mt19937_64& rng, int config) {
  std::uniform_int_distribution<int> pick(0, 1 << 20);
  const auto mode = static_cast<MapMode>(config % 4);
  GridConfig g;
  g.leaf_size = 0.2;
  g.levels = 1 + pick(rng) % 3;
  g.geo_dim = 2 + pick(rng) % 7;
  g.sem_dim = 4 + pick(rng) % 9;
  g.init_std = 0.3;
  g.seed = static_cast<uint64_t>(pick(rng));
  const int classes = 3 + pick(rng) % 4;
  const DecoderConfig dec{8 + pick(rng) % 17, 1 + pick(rng) % 2};
  const int instances = is_panoptic(mode) ? 3 + pick(rng) % 3 : 0;

  GradProblem p;
  p.model = MapModel::create(g, dec, classes, instances, 0.5, static_cast<uint64_t>(pick(rng)));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  LabeledScan s;
  s.origin = Vec3(u(rng), u(rng), 1.5);
  s.pose.translation = s.origin;
  for (int i = 0; i < 12; ++i) {
    const double x = u(rng), y = u(rng);
    s.endpoints.emplace_back(x, y, 0.2 * std::sin(2 * x) + 0.1 * y);
    s.labels.push_back(1 + pick(rng) % (classes - 1));
    s.instances.push_back(instances ? static_cast<uint32_t>(pick(rng) % instances) : 0u);
  }
  p.scans.push_back(s);
  allocate_for_scans(p.model.grid, p.scans, 0.3);
  SamplerConfig sc;
  sc.samples_per_ray = 4;
  p.batch = BatchSampler(p.scans, sc, static_cast<uint64_t>(config)).build_batch(0, 12);

  p.base.mode = mode;
  p.base.weights = LossWeights::defaults_for(mode);
  p.base.weights.lambda2 = p.base.weights.lambda3 = p.base.weights.lambda4 = p.base.weights.lambda5 = 0.0;
  p.base.thing_classes.assign(static_cast<size_t>(classes), 0);
  for (int c = 1; c < classes; c += 2) p.base.thing_classes[static_cast<size_t>(c)] = 1;
  if (is_incremental(mode)) {
    // Non-trivial importance and a snapshot that differs from the live parameters.
    p.store = ImportanceStore::create(p.model);
    std::uniform_real_distribution<double> b(0.0, 2.0), n(-0.05, 0.05);
    for (auto* t : {&p.store.geo, &p.store.sem, &p.store.gnf, &p.store.snf, &p.store.instance}) {
      for (double& v : t->beta) v = b(rng);
      for (double& v : t->prev) v += n(rng);
    }
    p.base.importance = &p.store;
  }
  return p;
}

struct Parameter {
  std::function<double&()> ref;
  std::function<double(const ModelGradient&)> grad;
};

constexpr double kGradFloor = 1e-5;

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  // Central differences with h = 1e-6 carry ~1e-10 of roundoff; gradients below the
  // floor are compared against it instead of against themselves.
  return std::sqrt(diff) / std::max(std::sqrt(std::max(na, nb)), kGradFloor);
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst_mlp = 0, worst_interp = 0;
  int checks = 0;
  for (int config = 0; config < 100; ++config) {
    GradProblem p = make_problem(rng, config);
    MapModel& m = p.model;

    // Terms: (weights of J_k), subtract J_0 = L1 to isolate term k.
    std::vector<std::pair<std::string, LossWeights>> terms{{"L1", p.base.weights}};
    auto with = [&](double LossWeights::*field) {
      LossWeights w = p.base.weights;
      w.*field = 1.0;
      return w;
    };
    terms.emplace_back("L2", with(&LossWeights::lambda2));
    terms.emplace_back("L4", with(&LossWeights::lambda4));
    if (is_incremental(p.base.mode)) terms.emplace_back("L3", with(&LossWeights::lambda3));
    if (is_panoptic(p.base.mode)) terms.emplace_back("L5", with(&LossWeights::lambda5));

    ObjectiveContext c0 = p.base;
    auto objective = [&](const LossWeights& w) {
      ObjectiveContext c = p.base;
      c.weights = w;
      const double base = total_loss(m, p.batch, c0).total;
      return w.lambda2 + w.lambda3 + w.lambda4 + w.lambda5 == 0.0 ? base : total_loss(m, p.batch, c).total - base;
    };

    for (const auto& [name, w] : terms) {
      ObjectiveContext c = p.base;
      c.weights = w;
      ModelGradient g = ModelGradient::zeros_like(m), g0 = ModelGradient::zeros_like(m);
      total_loss(m, p.batch, c, &g);
      if (name != "L1") {
        total_loss(m, p.batch, c0, &g0);
        g.add_scaled(g0, -1.0);
      }

      // Decoder parameters.
      std::vector<Parameter> mlp_params, feat_params;
      for (auto [mlp, which] : {std::pair{&m.gnf, 0}, std::pair{&m.snf, 1}, std::pair{&m.instance_head, 2}}) {
        if (mlp->empty()) continue;
        const size_t n = flatten(*mlp).size();
        for (int k = 0; k < 6; ++k) {
          const size_t idx = std::uniform_int_distribution<size_t>(0, n - 1)(rng);
          mlp_params.push_back({[mlp, idx]() -> double& { return mlp_param(*mlp, idx); },
                                [which, idx](const ModelGradient& gr) {
                                  const MlpGradient& mg = which == 0 ? gr.gnf : which == 1 ? gr.snf : gr.instance;
                                  return flatten(mg)[idx];
                                }});
        }
      }
      // Corner features reached by the batch.
      for (auto [rows, table] : {std::pair{&g.geo, FeatureTable::geometry}, std::pair{&g.sem, FeatureTable::semantic}}) {
        if (rows->empty()) continue;
        for (int k = 0; k < 6; ++k) {
          const size_t r = std::uniform_int_distribution<size_t>(0, rows->size() - 1)(rng);
          const int64_t slot = rows->slot(r);
          const int col = std::uniform_int_distribution<int>(0, rows->width() - 1)(rng);
          const bool geo = table == FeatureTable::geometry;
          feat_params.push_back(
              {[&m, table, slot, col]() -> double& { return m.grid.features(table, slot)[static_cast<size_t>(col)]; },
               [geo, slot, col](const ModelGradient& gr) {
                 const double* row = (geo ? gr.geo : gr.sem).find(slot);
                 return row ? row[col] : 0.0;
               }});
        }
      }
      for (auto* group : {&mlp_params, &feat_params}) {
        std::vector<double> analytic, fd;
        for (auto& prm : *group) {
          double& v = prm.ref();
          const double keep = v, h = 1e-6;
          v = keep + h;
          const double up = objective(w);
          v = keep - h;
          const double dn = objective(w);
          v = keep;
          fd.push_back((up - dn) / (2 * h));
          analytic.push_back(prm.grad(g));
        }
        const double err = relative_error(analytic, fd);
        if (err > 1e-3 && std::getenv("SEMAP_DEBUG")) {
          std::cerr << "config " << config << " term " << name << (group == &mlp_params ? " mlp" : " feat") << "\n";
          for (size_t i = 0; i < fd.size(); ++i) std::cerr << "  " << analytic[i] << " vs " << fd[i] << "\n";
        }
        (group == &mlp_params ? worst_mlp : worst_interp) = std::max(group == &mlp_params ? worst_mlp : worst_interp, err);
        ++checks;
      }
    }

    // Spatial position: analytic SDF gradient against differences of the decoded SDF.
    for (size_t i = 0; i < p.batch.size(); i += 5) {
      const Vec3 x = p.batch[i].x;
      const auto ga = sdf_spatial_gradient(m, x);
      if (!ga) continue;
      std::vector<double> a(ga->data(), ga->data() + 3), fd(3);
      bool ok = true;
      for (int k = 0; k < 3 && ok; ++k) {
        Vec3 xp = x, xm = x;
        xp[k] += 1e-6;
        xm[k] -= 1e-6;
        const auto fp = m.sdf(xp), fm = m.sdf(xm);
        ok = fp && fm;
        if (ok) fd[static_cast<size_t>(k)] = (*fp - *fm) / 2e-6;
      }
      if (!ok) continue;
      worst_interp = std::max(worst_interp, relative_error(a, fd));
      ++checks;
    }
  }
  const double secs = since(t0);
  Outcome o;
  o.passed = worst_mlp < 1e-4 && worst_interp < 1e-3 && secs < 60.0;
  o.detail = std::to_string(checks) + " checks over 100 configurations; worst relative error MLP " +
             fmt("%.2e", worst_mlp) + " (< 1e-4), interpolation/position " + fmt("%.2e", worst_interp) +
             " (< 1e-3), norms floored at " + fmt("%.0e", kGradFloor) + "; " + fmt("%.1f s", secs);
  return o;
}

// --- 2: Morton / corner hash -----------------------------------------------

Outcome criterion_morton() {
  const auto t0 = Clock::now();
  size_t failures = 0, cases = 0;
  std::set<uint64_t> codes;
  for (int x = -8; x <= 8; ++x) {
    for (int y = -8; y <= 8; ++y) {
      for (int z = -8; z <= 8; ++z) {
        const uint64_t c = morton::encode(x, y, z);
        failures += !(morton::decode(c) == morton::Coords{x, y, z});
        codes.insert(c);
        ++cases;
      }
    }
  }
  failures += codes.size() != cases;
  // Every level of a grid: insert all keys, then look each one up.
  GridConfig g;
  g.levels = 8;
  g.geo_dim = 1;
  g.sem_dim = 1;
  OctreeFeatureGrid grid(g);
  for (int level = 0; level < g.levels; ++level) {
    for (int x = -8; x <= 8; ++x) {
      for (int y = -8; y <= 8; ++y) {
        for (int z = -8; z <= 8; ++z) grid.allocate_corner({level, x, y, z});
      }
    }
  }
  failures += grid.corner_count() != cases * 8;
  for (int level = 0; level < g.levels; ++level) {
    for (int x = -8; x <= 8; ++x) {
      for (int y = -8; y <= 8; ++y) {
        for (int z = -8; z <= 8; ++z) {
          const VoxelKey k{level, x, y, z};
          const int64_t s = grid.find(k);
          failures += s < 0 || !(grid.key_of(s) == k);
        }
      }
    }
  }
  const double secs = since(t0);
  return {failures == 0 && secs < 1.0, std::to_string(cases) + " coordinates x 8 levels, " +
                                           std::to_string(failures) + " failures; " + fmt("%.3f s", secs)};
}

// --- 9: metrics against brute force ------------------------------------------

Outcome criterion_metrics() {
  std::mt19937_64 rng(9);
  size_t mismatches = 0, instances = 0;
  double uniform_gap = 0;
  for (size_t n : {1, 2, 10, 50, 200, 1000, 2000}) {
    for (int rep = 0; rep < 3; ++rep) {
      ++instances;
      std::uniform_real_distribution<double> u(0.0, 3.0);
      std::uniform_int_distribution<int> cls(1, 4), grid(0, 15);
      LabeledPoints r, t;
      for (size_t i = 0; i < n; ++i) {
        // Mix continuous and lattice coordinates so equal distances (ties) occur.
        const bool lattice = i % 3 == 0;
        r.points.push_back(lattice ? Vec3(0.2 * grid(rng), 0.2 * grid(rng), 0.2 * grid(rng)) : Vec3(u(rng), u(rng), u(rng)));
        t.points.push_back(lattice ? Vec3(0.2 * grid(rng), 0.2 * grid(rng), 0.2 * grid(rng)) : Vec3(u(rng), u(rng), u(rng)));
        r.class_id.push_back(static_cast<uint16_t>(cls(rng)));
        t.class_id.push_back(static_cast<uint16_t>(cls(rng)));
      }
      r.instance_id.assign(n, 0);
      t.instance_id.assign(n, 0);

      const PointIndex index(t.points, 0.15);
      for (size_t i = 0; i < n; ++i) {
        size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < n; ++j) {
          const double d = (t.points[j] - r.points[i]).norm();
          if (d < bd) bd = d, best = j;
        }
        const auto nn = index.nearest(r.points[i]);
        mismatches += !nn || nn->index != best || nn->distance != bd;
      }

      // Same-class distances and the aggregate.
      const auto d = directed_class_distances(r, t);
      std::map<int, std::pair<double, size_t>> acc;
      std::set<int> in_t(t.class_id.begin(), t.class_id.end());
      for (size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < n; ++j) {
          if (t.class_id[j] == r.class_id[i]) best = std::min(best, (t.points[j] - r.points[i]).norm());
        }
        if (!in_t.count(r.class_id[i])) {
          mismatches += !std::isnan(d[i]);
          continue;
        }
        mismatches += d[i] != best;
      }

      // Uniform labels: class-aware equals plain chamfer computed by brute force.
      LabeledPoints ru = r, tu = t;
      ru.class_id.assign(n, 1);
      tu.class_id.assign(n, 1);
      double ab = 0, ba = 0;
      for (size_t i = 0; i < n; ++i) {
        double x = std::numeric_limits<double>::infinity(), y = x;
        for (size_t j = 0; j < n; ++j) {
          x = std::min(x, (tu.points[j] - ru.points[i]).norm());
          y = std::min(y, (ru.points[j] - tu.points[i]).norm());
        }
        ab += x;
        ba += y;
      }
      const double plain = 0.5 * (ab / n + ba / n);
      uniform_gap = std::max(uniform_gap, std::abs(scd(ru, tu).chamfer - plain));
    }
  }
  return {mismatches == 0 && uniform_gap <= 1e-12,
          std::to_string(instances) + " instances up to 2000 points, " + std::to_string(mismatches) +
              " mismatches against brute force; uniform-label gap " + fmt("%.1e", uniform_gap) + " (<= 1e-12)"};
}

// --- 10: determinism through the command-line tool ----------------------------

int run_cli(const std::string& args) {
  const std::string cmd =
      "env -u SEMAP_DATA_ROOT \"" + std::string(SEMAP_CLI_PATH) + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "semap_acceptance_determinism";
  fs::remove_all(root);
  const fs::path cfg = fs::path(SEMAP_TEST_FIXTURES) / "tiny.cfg";
  std::string loss[2], ply[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = root / ("run" + std::to_string(i));
    const std::string common = "--config \"" + cfg.string() + "\" --seed 7 --threads 1 --out \"" + out.string() + "\"";
    if (run_cli("train " + common) != 0 || run_cli("mesh " + common) != 0) {
      return {false, "command-line run " + std::to_string(i) + " failed"};
    }
    loss[i] = slurp(out / "loss.csv");
    ply[i] = slurp(out / "mesh.ply");
  }
  fs::remove_all(root);
  const bool same = !loss[0].empty() && !ply[0].empty() && loss[0] == loss[1] && ply[0] == ply[1];
  return {same, "loss.csv " + std::to_string(loss[0].size()) + " bytes " + (loss[0] == loss[1] ? "identical" : "DIFFER") +
                    ", mesh.ply " + std::to_string(ply[0].size()) + " bytes " + (ply[0] == ply[1] ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };

  std::map<int, std::pair<std::string, Outcome>> results;
  auto record = [&](int id, const std::string& name, Outcome o) {
    std::cout << "criterion " << id << ": " << (o.passed ? "PASS" : "FAIL") << "  " << name << "  " << o.detail
              << std::endl;
    results[id] = {name, std::move(o)};
  };
  auto guarded = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    if (!want(id)) return;
    try {
      record(id, name, fn());
    } catch (const std::exception& e) {
      record(id, name, {false, std::string("error: ") + e.what()});
    }
  };

  guarded(1, "gradient correctness", criterion_gradients);
  guarded(2, "morton/hash round trip", criterion_morton);

  const std::vector<std::pair<int, std::string>> suites{{3, "geometry"},   {4, "semantic"}, {5, "panoptic"},
                                                        {6, "forgetting"}, {7, "dynamic"},  {8, "merge"}};
  for (const auto& [id, suite] : suites) {
    if (!want(id)) continue;
    try {
      std::ostringstream log;
      const SuiteReport rep = run_suite(suite);
      for (const auto& c : rep.criteria) {
        if (c.id == id) record(id, c.name, {c.passed, c.detail + " (" + fmt("%.0f s", rep.seconds) + ")"});
      }
    } catch (const std::exception& e) {
      record(id, suite, {false, std::string("error: ") + e.what()});
    }
  }

  guarded(9, "metric correctness", criterion_metrics);
  guarded(10, "determinism", criterion_determinism);

  size_t failed = 0;
  for (const auto& [id, r] : results) failed += !r.second.passed;
  std::cout << results.size() - failed << "/" << results.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
