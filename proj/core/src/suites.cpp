#include "semap/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <sstream>

#include "semap/error.hpp"
#include "semap/evaluator.hpp"
#include "semap/merger.hpp"
#include "semap/parallel.hpp"
#include "semap/spatial_hash.hpp"

#ifndef SEMAP_SCENE_DIR
#define SEMAP_SCENE_DIR "scenes"
#endif

namespace semap {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Context {
  const SuiteOptions& opt;
  std::filesystem::path scenes;

  void log(const std::string& line) const {
    if (opt.log) *opt.log << line << std::endl;
  }

  RunConfig config(const std::string& scene, MapMode mode, const std::string& extra = {}) const {
    std::ostringstream text;
    text << "mode = " << to_string(mode) << "\nseed = " << opt.seed << "\ndata.source = synth\n"
         << "data.scene = " << (scenes / scene).string() << "\n"
         << extra;
    return RunConfig::parse(text.str());
  }
};

struct Built {
  Dataset data;
  MapModel model;
  SemanticMesh mesh;
  double train_seconds = 0.0;
};

Built build(const Context& ctx, const RunConfig& cfg, const std::string& tag, int first = -1, int last = -1) {
  const auto t0 = Clock::now();
  Built b;
  b.data = load_dataset(cfg, first, last);
  b.model = build_model(cfg, b.data);
  train_model(cfg, b.data, b.model);
  b.train_seconds = seconds_since(t0);
  b.mesh = mesh_model(cfg, b.model, b.data.palette);
  ctx.log(tag + ": trained " + fmt("%.1f s", b.train_seconds) + ", " + std::to_string(b.mesh.triangle_count()) +
          " triangles");
  return b;
}

std::vector<Vec3> all_endpoints(std::span<const LabeledScan> scans) {
  std::vector<Vec3> out;
  for (const auto& s : scans) out.insert(out.end(), s.endpoints.begin(), s.endpoints.end());
  return out;
}

// Reconstruction against the analytic surface needs dense samples on both sides:
// with sparse samples the nearest-sample distance is dominated by sample spacing.
constexpr size_t kTruthCandidates = 800000;
constexpr size_t kMeshSamples = 400000;
constexpr double kObservedRadius = 0.2;

MetricReport geometry_metrics(const SemanticMesh& mesh, const LabeledPoints& truth, double tau, uint64_t seed) {
  return reconstruction_metrics(sample_surface(mesh, kMeshSamples, seed), truth, tau, false);
}

double mean_abs_sdf(const MapModel& model, const std::vector<Vec3>& pts) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& p : pts) {
    if (auto v = model.sdf(p)) {
      sum += std::abs(*v);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::infinity();
}

// --- geometry ---------------------------------------------------------------

SuiteReport geometry_suite(const Context& ctx) {
  SuiteReport rep{"geometry", {}, 0.0};
  const RunConfig cfg = ctx.config("geometry.scene", MapMode::batch_semantic,
                                   "data.scans = 10\ndata.rays_per_scan = 4000\ntrain.batch_steps = 2000\n");
  Built b = build(ctx, cfg, "geometry");
  const LabeledPoints truth =
      observed_surface(*b.data.synth, b.data.scans, kTruthCandidates, kObservedRadius, ctx.opt.seed + 1);
  const MetricReport m = geometry_metrics(b.mesh, truth, 0.1, ctx.opt.seed + 2);
  ctx.log("geometry: " + format_report(m));

  CriterionResult c;
  c.id = 3;
  c.name = "geometry reconstruction";
  c.passed = m.chamfer_l1_cm < 5.0 && m.completion_ratio > 90.0;
  c.detail = "Ch-L1 " + fmt("%.2f cm", m.chamfer_l1_cm) + " (< 5), Com.R " + fmt("%.2f %%", m.completion_ratio) +
             " (> 90) at tau 0.1 m";
  c.values = {{"chamfer_l1_cm", m.chamfer_l1_cm},
              {"completion_cm", m.completion_cm},
              {"accuracy_cm", m.accuracy_cm},
              {"completion_ratio", m.completion_ratio},
              {"f_score", m.f_score},
              {"rays", static_cast<double>(cfg.data.scans * cfg.data.rays_per_scan)},
              {"steps", static_cast<double>(cfg.train.batch_steps)},
              {"train_seconds", b.train_seconds}};
  rep.criteria.push_back(c);
  return rep;
}

// --- semantic ---------------------------------------------------------------

SuiteReport semantic_suite(const Context& ctx) {
  SuiteReport rep{"semantic", {}, 0.0};
  const RunConfig cfg = ctx.config("semantic.scene", MapMode::batch_semantic,
                                   "data.scans = 10\ndata.rays_per_scan = 4000\ntrain.batch_steps = 1000\n");
  Built b = build(ctx, cfg, "semantic");
  const SynthScene& scene = *b.data.synth;

  size_t labeled = 0, correct = 0;
  for (size_t i = 0; i < b.mesh.vertices.size(); ++i) {
    if (b.mesh.class_id[i] == 0) continue;
    ++labeled;
    correct += b.mesh.class_id[i] == scene.nearest_static_class(b.mesh.vertices[i]);
  }
  const double accuracy = labeled ? 100.0 * static_cast<double>(correct) / static_cast<double>(labeled) : 0.0;

  // 10^5 query vertices on the reconstructed surface.
  constexpr size_t kQueries = 100000;
  const LabeledPoints queries = sample_surface(b.mesh, kQueries, ctx.opt.seed + 3);
  TriangleMesh cloud{queries.points, {}};
  auto t0 = Clock::now();
  const SemanticMesh snf_labels = label_mesh(cloud, b.model, b.data.palette);
  const double snf_s = seconds_since(t0);

  std::vector<Vec3> ref;
  std::vector<int> ref_class;
  for (const auto& s : b.data.scans) {
    ref.insert(ref.end(), s.endpoints.begin(), s.endpoints.end());
    ref_class.insert(ref_class.end(), s.labels.begin(), s.labels.end());
  }
  t0 = Clock::now();
  size_t agree = 0;
  for (size_t i = 0; i < queries.size(); ++i) {
    const auto nn = brute_force_nearest(ref, queries.points[i]);
    agree += nn && ref_class[nn->index] == snf_labels.class_id[i];
  }
  const double brute_s = seconds_since(t0);
  const double speedup = brute_s / std::max(snf_s, 1e-9);
  ctx.log("semantic: vertex accuracy " + fmt("%.2f %%", accuracy) + ", SNF " + fmt("%.3f s", snf_s) +
          ", brute force " + fmt("%.3f s", brute_s));

  CriterionResult c;
  c.id = 4;
  c.name = "semantic fidelity";
  c.passed = accuracy >= 95.0 && speedup >= 5.0;
  c.detail = "vertex class accuracy " + fmt("%.2f %%", accuracy) + " (>= 95), labeling speedup " +
             fmt("%.1fx", speedup) + " (>= 5) at 1e5 vertices";
  c.values = {{"vertex_accuracy", accuracy},
              {"labeled_vertices", static_cast<double>(labeled)},
              {"snf_seconds", snf_s},
              {"brute_force_seconds", brute_s},
              {"speedup", speedup},
              {"baseline_agreement", 100.0 * static_cast<double>(agree) / static_cast<double>(queries.size())}};
  rep.criteria.push_back(c);
  return rep;
}

// --- panoptic ---------------------------------------------------------------

// Merged semantic coordinate of column `r` of a level-`level` feature row.
int merged_coordinate(const OctreeFeatureGrid& grid, int level, int r) {
  if (grid.config().merge == LevelMerge::sum) return r;
  return (grid.levels() - 1 - level) * grid.dim(FeatureTable::semantic) + r;
}

// Counts nonzero semantic-feature gradient entries inside and outside [lo, hi).
std::pair<size_t, size_t> gradient_support(const MapModel& model, const SparseRows& rows, int lo, int hi) {
  size_t inside = 0, outside = 0;
  for (size_t i = 0; i < rows.size(); ++i) {
    const int level = model.grid.key_of(rows.slot(i)).level;
    const auto row = rows.row_at(i);
    for (int r = 0; r < rows.width(); ++r) {
      if (row[r] == 0.0) continue;
      const int m = merged_coordinate(model.grid, level, r);
      (m >= lo && m < hi ? inside : outside)++;
    }
  }
  return {inside, outside};
}

SuiteReport panoptic_suite(const Context& ctx) {
  SuiteReport rep{"panoptic", {}, 0.0};
  const RunConfig cfg = ctx.config("panoptic.scene", MapMode::batch_panoptic,
                                   "data.scans = 10\ndata.rays_per_scan = 4000\ntrain.batch_steps = 1000\n");
  Built b = build(ctx, cfg, "panoptic");
  const SceneSpec& spec = b.data.synth->spec;

  // Vertices on each car, away from every other primitive.
  std::vector<size_t> cars;
  for (size_t p = 0; p < spec.primitives.size(); ++p) {
    if (spec.primitives[p].type == PrimitiveType::box && b.data.palette.is_thing(spec.primitives[p].class_id)) {
      cars.push_back(p);
    }
  }
  std::vector<std::map<int, size_t>> votes(cars.size());
  for (size_t v = 0; v < b.mesh.vertices.size(); ++v) {
    const Vec3& x = b.mesh.vertices[v];
    for (size_t c = 0; c < cars.size(); ++c) {
      if (std::abs(spec.primitives[cars[c]].sdf(x)) > 0.5 * cfg.s_cube) continue;
      bool clear = true;
      for (size_t p = 0; p < spec.primitives.size(); ++p) {
        if (p != cars[c] && spec.primitives[p].sdf(x) < 2.0 * cfg.s_cube) clear = false;
      }
      if (clear) votes[c][b.mesh.instance_id[v]]++;
    }
  }
  double min_purity = 100.0;
  std::vector<int> majority;
  std::string purity_text;
  for (size_t c = 0; c < cars.size(); ++c) {
    size_t total = 0, best = 0;
    int id = 0;
    for (const auto& [inst, n] : votes[c]) {
      total += n;
      if (n > best) best = n, id = inst;
    }
    const double purity = total ? 100.0 * static_cast<double>(best) / static_cast<double>(total) : 0.0;
    min_purity = std::min(min_purity, purity);
    majority.push_back(id);
    purity_text += (c ? ", " : "") + fmt("%.2f %%", purity) + " (id " + std::to_string(id) + ", " +
                   std::to_string(total) + " vertices)";
  }
  bool distinct = cars.size() >= 2;
  for (size_t i = 0; i < majority.size(); ++i) {
    if (majority[i] == 0) distinct = false;
    for (size_t j = 0; j < i; ++j) distinct = distinct && majority[i] != majority[j];
  }

  // Semantic and instance losses, each alone, on one training batch.
  BatchSampler sampler(b.data.scans, cfg.train.sampler, cfg.seed);
  const auto batch = sampler.build_batch(0, cfg.train.rays_per_step);
  ObjectiveContext octx;
  octx.mode = cfg.mode;
  octx.thing_classes = thing_mask(b.data.palette);
  const int split = b.model.semantic_split;
  const int width = b.model.grid.merged_dim(FeatureTable::semantic);
  auto support = [&](double l4, double l5) {
    octx.weights = cfg.train.weights;
    octx.weights.lambda2 = 0.0;
    octx.weights.lambda4 = l4;
    octx.weights.lambda5 = l5;
    ModelGradient g = ModelGradient::zeros_like(b.model);
    total_loss(b.model, batch, octx, &g);
    return l4 > 0 ? gradient_support(b.model, g.sem, 0, split) : gradient_support(b.model, g.sem, split, width);
  };
  const auto sem = support(1.0, 0.0);
  const auto inst = support(0.0, 1.0);
  const bool disjoint = sem.second == 0 && inst.second == 0 && sem.first > 0 && inst.first > 0;
  ctx.log("panoptic: purity " + purity_text);

  CriterionResult c;
  c.id = 5;
  c.name = "panoptic separation";
  c.passed = distinct && min_purity >= 95.0 && disjoint;
  c.detail = "instance purity " + purity_text + (distinct ? ", distinct ids" : ", ids NOT distinct") +
             "; semantic grads on coords [0," + std::to_string(split) + "): " + std::to_string(sem.first) +
             " in / " + std::to_string(sem.second) + " out, instance grads on [" + std::to_string(split) + "," +
             std::to_string(width) + "): " + std::to_string(inst.first) + " in / " + std::to_string(inst.second) +
             " out";
  c.values = {{"min_purity", min_purity},
              {"distinct_ids", distinct ? 1.0 : 0.0},
              {"semantic_split", static_cast<double>(split)},
              {"semantic_grad_outside", static_cast<double>(sem.second)},
              {"instance_grad_outside", static_cast<double>(inst.second)}};
  rep.criteria.push_back(c);
  return rep;
}

// --- forgetting -------------------------------------------------------------

SuiteReport forgetting_suite(const Context& ctx) {
  SuiteReport rep{"forgetting", {}, 0.0};
  // The wall hides each half of the drive from the other.
  const std::vector<int> region1{0, 1, 2, 3, 4}, region2{5, 6, 7, 8, 9};
  const std::string common = "data.scans = 10\ndata.rays_per_scan = 4000\ntrain.steps_per_scan = 200\n";
  const RunConfig with_cfg = ctx.config("forgetting.scene", MapMode::incremental_semantic, common);
  const RunConfig without_cfg =
      ctx.config("forgetting.scene", MapMode::incremental_semantic, common + "loss.lambda3 = 0\n");

  const Dataset data = load_dataset(with_cfg);
  std::vector<LabeledScan> seq, first, second;
  for (int s : region1) first.push_back(data.scans[static_cast<size_t>(s)]);
  for (int s : region2) second.push_back(data.scans[static_cast<size_t>(s)]);
  seq = first;
  seq.insert(seq.end(), second.begin(), second.end());

  auto truth_of = [&](const std::vector<LabeledScan>& scans, uint64_t salt) {
    return observed_surface(*data.synth, scans, kTruthCandidates / 2, kObservedRadius, ctx.opt.seed + salt).points;
  };
  const auto truth1 = truth_of(first, 11), truth2 = truth_of(second, 12);

  struct Errors {
    double r1_before, r1, r2;
  };
  auto run = [&](const RunConfig& cfg, const std::string& tag) {
    MapModel model = build_model(cfg, data);
    TrainConfig tc = cfg.train;
    tc.mode = cfg.mode;
    tc.seed = cfg.seed;
    double r1_before = 0.0;
    const auto thing = thing_mask(data.palette);
    int64_t boundary = static_cast<int64_t>(first.size()) * tc.steps_per_scan - 1;
    MapModel* live = &model;
    train(seq, model, tc, thing, [&](const LossRecord& r) {
      if (r.step == boundary) r1_before = mean_abs_sdf(*live, truth1);
    });
    Errors e{r1_before, mean_abs_sdf(model, truth1), mean_abs_sdf(model, truth2)};
    ctx.log("forgetting " + tag + ": region 1 " + fmt("%.4f", e.r1_before) + " -> " + fmt("%.4f m", e.r1) +
            ", region 2 " + fmt("%.4f m", e.r2));
    return e;
  };
  const Errors with = run(with_cfg, "lambda3=" + fmt("%g", with_cfg.train.weights.lambda3));
  const Errors without = run(without_cfg, "lambda3=0");

  CriterionResult c;
  c.id = 6;
  c.name = "forgetting regularization";
  c.passed = with.r1 < without.r1 && with.r2 <= 1.2 * without.r2;
  c.detail = "region-1 SDF error " + fmt("%.2f cm", 100 * with.r1) + " vs " + fmt("%.2f cm", 100 * without.r1) +
             " without L3; region-2 " + fmt("%.2f cm", 100 * with.r2) + " vs " + fmt("%.2f cm", 100 * without.r2) +
             " (ratio " + fmt("%.3f", with.r2 / without.r2) + ", <= 1.2)";
  c.values = {{"region1_error", with.r1},
              {"region1_error_no_l3", without.r1},
              {"region1_error_before", with.r1_before},
              {"region2_error", with.r2},
              {"region2_error_no_l3", without.r2},
              {"lambda3", with_cfg.train.weights.lambda3}};
  rep.criteria.push_back(c);
  return rep;
}

// --- dynamic ----------------------------------------------------------------

SuiteReport dynamic_suite(const Context& ctx) {
  SuiteReport rep{"dynamic", {}, 0.0};
  const std::string common =
      "data.scans = 10\ndata.rays_per_scan = 4000\ntrain.batch_steps = 1000\ndynamic.classes = 5\n";
  const RunConfig moving = ctx.config("dynamic.scene", MapMode::batch_semantic, common);
  const RunConfig unfiltered =
      ctx.config("dynamic.scene", MapMode::batch_semantic, common + "dynamic.filter = off\n");
  const RunConfig still = ctx.config("dynamic_static.scene", MapMode::batch_semantic, common);

  auto dynamic_triangles = [&](const SemanticMesh& m, const Palette& palette) {
    size_t n = 0;
    for (const auto& t : m.triangles) {
      bool any = false;
      for (uint32_t v : t) any = any || palette.is_dynamic(m.class_id[v]);
      n += any;
    }
    return n;
  };
  Built a = build(ctx, moving, "dynamic filtered");
  Built off = build(ctx, unfiltered, "dynamic unfiltered");
  Built s = build(ctx, still, "box-free");
  const size_t dyn = dynamic_triangles(a.mesh, a.data.palette);
  const size_t dyn_off = dynamic_triangles(off.mesh, off.data.palette);
  const double static_a = static_cast<double>(a.mesh.triangle_count() - dyn);
  const double static_s = static_cast<double>(s.mesh.triangle_count());
  const double diff = 100.0 * std::abs(static_a - static_s) / static_s;

  CriterionResult c;
  c.id = 7;
  c.name = "dynamic filtering";
  c.passed = dyn == 0 && diff <= 2.0;
  c.detail = std::to_string(dyn) + " dynamic-class triangles with filtering (" + std::to_string(dyn_off) +
             " without); static triangles " + fmt("%.0f", static_a) + " vs " + fmt("%.0f", static_s) +
             " box-free (" + fmt("%.2f %%", diff) + ", <= 2)";
  c.values = {{"dynamic_triangles", static_cast<double>(dyn)},
              {"dynamic_triangles_unfiltered", static_cast<double>(dyn_off)},
              {"static_triangles", static_a},
              {"box_free_triangles", static_s},
              {"difference_percent", diff}};
  rep.criteria.push_back(c);
  return rep;
}

// --- merge ------------------------------------------------------------------

SuiteReport merge_suite(const Context& ctx) {
  SuiteReport rep{"merge", {}, 0.0};
  const RunConfig cfg = ctx.config("merge.scene", MapMode::batch_semantic,
                                   "data.scans = 20\ndata.rays_per_scan = 2500\ntrain.batch_steps = 1000\n"
                                   "data.submap_frame = true\n");
  const int second_first = 10, last = 19;
  Built b = build(ctx, cfg, "submap B [10,19]", second_first, last);
  Built single = build(ctx, cfg, "single map [0,19]", 0, last);
  const RigidTransform to_a = single.data.reference_pose.inverse();
  const LabeledPoints truth =
      observed_surface(*single.data.synth, single.data.synth->scans, kTruthCandidates, kObservedRadius,
                       ctx.opt.seed + 21, to_a);
  const double single_ch = geometry_metrics(single.mesh, truth, 0.1, ctx.opt.seed + 22).chamfer_l1_cm;

  // Odometry-like error on the second submap's pose.
  const RigidTransform truth_rel = to_a * b.data.reference_pose;
  const RigidTransform drift =
      RigidTransform::from_axis_angle(Vec3(0.2, -0.1, 1.0).normalized(), 1.5 * std::numbers::pi / 180.0,
                                      Vec3(0.15, -0.1, 0.05));

  bool aligned = true, monotone = true, chamfer_ok = true;
  double prev_residual = std::numeric_limits<double>::infinity();
  std::string detail;
  CriterionResult c;
  for (int k : {1, 5, 10}) {
    const int a_last = second_first + k - 1;
    Built a = (a_last == last) ? single : build(ctx, cfg, "submap A [0," + std::to_string(a_last) + "]", 0, a_last);
    std::vector<Vec3> pts, views;
    for (int s = 0; s < k; ++s) {
      const auto& scan = b.data.scans[static_cast<size_t>(s)];
      pts.insert(pts.end(), scan.endpoints.begin(), scan.endpoints.end());
      views.insert(views.end(), scan.endpoints.size(), scan.origin);
    }
    Submap sa{a.mesh, a.data.reference_pose, {}, "A"};
    Submap sb{b.mesh, a.data.reference_pose * drift * truth_rel, orient_points(pts, views), "B"};
    MergeConfig mc;
    mc.s_cube = cfg.s_cube;
    mc.seed = ctx.opt.seed + 23;
    MergeResult merged;
    try {
      merged = merge_submaps({sa, sb}, mc);
    } catch (const AlignmentError& e) {
      ctx.log(std::string("merge: ") + e.what());
      aligned = monotone = chamfer_ok = false;
      detail += " k=" + std::to_string(k) + ": alignment failed;";
      continue;
    }
    const RigidTransform& est = merged.to_first[1];
    const double rot_deg = rotation_error(est, truth_rel) * 180.0 / std::numbers::pi;
    const double trans = translation_error(est, truth_rel);
    const double residual = merged.pairs[0].residual;
    const double fused_ch = geometry_metrics(merged.mesh, truth, 0.1, ctx.opt.seed + 24).chamfer_l1_cm;
    // Pose tolerance applies to the full 10-scan overlap; smaller overlaps only feed the trend check.
    if (k == 10) aligned = aligned && rot_deg < 0.2 && trans < 0.01;
    monotone = monotone && residual <= prev_residual;
    chamfer_ok = chamfer_ok && fused_ch <= 1.2 * single_ch;
    prev_residual = residual;
    ctx.log("merge k=" + std::to_string(k) + ": rot " + fmt("%.4f deg", rot_deg) + " trans " + fmt("%.4f m", trans) +
            " residual " + fmt("%.5f m", residual) + " fused Ch-L1 " + fmt("%.2f cm", fused_ch));
    detail += " k=" + std::to_string(k) + ": " + fmt("%.3f deg", rot_deg) + "/" + fmt("%.4f m", trans) + ", rms " +
              fmt("%.4f m", residual) + ", Ch-L1 " + fmt("%.2f cm", fused_ch) + ";";
    const std::string key = "k" + std::to_string(k) + "_";
    c.values[key + "rotation_deg"] = rot_deg;
    c.values[key + "translation_m"] = trans;
    c.values[key + "residual_m"] = residual;
    c.values[key + "fused_chamfer_cm"] = fused_ch;
  }
  c.values["single_chamfer_cm"] = single_ch;
  c.id = 8;
  c.name = "submap merge";
  c.passed = aligned && monotone && chamfer_ok;
  c.detail = "single-map Ch-L1 " + fmt("%.2f cm", single_ch) + ";" + detail + (aligned ? "" : " pose error too large;") +
             (monotone ? "" : " residual increased;") + (chamfer_ok ? "" : " fused Ch-L1 above 1.2x;");
  rep.criteria.push_back(c);
  return rep;
}

// --- sparsity ---------------------------------------------------------------

SuiteReport sparsity_suite(const Context& ctx) {
  SuiteReport rep{"sparsity", {}, 0.0};
  const std::string common = "data.scans = 10\ntrain.batch_steps = 1000\n";
  const RunConfig full = ctx.config("geometry.scene", MapMode::batch_semantic, common + "data.rays_per_scan = 4000\n");
  const RunConfig half = ctx.config("geometry.scene", MapMode::batch_semantic, common + "data.rays_per_scan = 2000\n");
  Built f = build(ctx, full, "sparsity 4000 rays/scan");
  Built h = build(ctx, half, "sparsity 2000 rays/scan");
  // Holes are measured over the surface observed by the dense run.
  const LabeledPoints truth =
      observed_surface(*f.data.synth, f.data.scans, kTruthCandidates, kObservedRadius, ctx.opt.seed + 31);
  auto hole_fraction = [&](const SemanticMesh& mesh) {
    const LabeledPoints r = sample_surface(mesh, kMeshSamples, ctx.opt.seed + 32);
    const auto d = directed_distances(truth, r);
    const double gap = 2.0 * full.s_cube;
    return 100.0 * static_cast<double>(std::count_if(d.begin(), d.end(), [&](double x) { return x > gap; })) /
           static_cast<double>(d.size());
  };
  const double hf = hole_fraction(f.mesh), hh = hole_fraction(h.mesh);

  CriterionResult c;
  c.id = 0;
  c.name = "sparsity trend";
  c.passed = hh > hf;
  c.detail = "untriangulated surface " + fmt("%.2f %%", hf) + " at 4000 rays/scan, " + fmt("%.2f %%", hh) +
             " at 2000";
  c.values = {{"hole_percent_full", hf}, {"hole_percent_half", hh}};
  rep.criteria.push_back(c);
  return rep;
}

}  // namespace

bool SuiteReport::passed() const {
  return !criteria.empty() && std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.passed; });
}

std::string SuiteReport::csv() const {
  std::ostringstream os;
  os << "suite,criterion,name,passed,key,value\n";
  for (const auto& c : criteria) {
    for (const auto& [k, v] : c.values) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << suite << ',' << c.id << ',' << c.name << ',' << (c.passed ? 1 : 0) << ',' << k << ',' << buf << '\n';
    }
  }
  return os.str();
}

std::string SuiteReport::summary() const {
  std::ostringstream os;
  for (const auto& c : criteria) {
    os << (c.passed ? "PASS" : "FAIL") << ' ' << suite;
    if (c.id > 0) os << " [" << c.id << ']';
    os << ' ' << c.name << ": " << c.detail << '\n';
  }
  os << suite << ": " << (passed() ? "passed" : "FAILED") << " in " << fmt("%.1f s", seconds) << '\n';
  return os.str();
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"geometry", "semantic", "panoptic", "forgetting",
                                              "dynamic",  "merge",    "sparsity"};
  return names;
}

std::filesystem::path default_scene_dir() { return SEMAP_SCENE_DIR; }

LabeledPoints observed_surface(const SynthScene& scene, std::span<const LabeledScan> scans, size_t candidates,
                               double radius, uint64_t seed, const RigidTransform& to_frame) {
  const auto ends = all_endpoints(scans);
  const PointIndex index(ends, radius);
  const LabeledPoints all = scene.sample_static_surface(candidates, seed);
  std::vector<uint8_t> keep(all.size(), 0);
  parallel_for(all.size(), [&](size_t i) { keep[i] = !index.radius(all.points[i], radius).empty(); });
  LabeledPoints out;
  for (size_t i = 0; i < all.size(); ++i) {
    if (!keep[i]) continue;
    out.points.push_back(to_frame.apply(all.points[i]));
    out.class_id.push_back(all.class_id[i]);
    out.instance_id.push_back(all.instance_id[i]);
  }
  return out;
}

SuiteReport run_suite(const std::string& name, const SuiteOptions& options) {
  const Context ctx{options, options.scene_dir.empty() ? default_scene_dir() : options.scene_dir};
  const auto t0 = Clock::now();
  SuiteReport rep;
  if (name == "geometry") rep = geometry_suite(ctx);
  else if (name == "semantic") rep = semantic_suite(ctx);
  else if (name == "panoptic") rep = panoptic_suite(ctx);
  else if (name == "forgetting") rep = forgetting_suite(ctx);
  else if (name == "dynamic") rep = dynamic_suite(ctx);
  else if (name == "merge") rep = merge_suite(ctx);
  else if (name == "sparsity") rep = sparsity_suite(ctx);
  else throw ConfigError("unknown suite '" + name + "'");
  rep.seconds = seconds_since(t0);
  return rep;
}

}  // namespace semap
