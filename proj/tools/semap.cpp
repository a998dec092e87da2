// semap: train, mesh, evaluate and merge semantic neural maps from LiDAR scans.
#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "run_manifest.hpp"
#include "semap/error.hpp"
#include "semap/evaluator.hpp"
#include "semap/kitti_io.hpp"
#include "semap/merger.hpp"
#include "semap/parallel.hpp"
#include "semap/pipeline.hpp"
#include "semap/suites.hpp"

namespace fs = std::filesystem;
using namespace semap;
using semap::cli::RunManifest;

namespace {

enum Exit { kOk = 0, kFailed = 1, kConfig = 2, kRuntime = 3, kAlignment = 4 };

struct Common {
  fs::path config;
  std::string mode;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  fs::path out = ".";
};

void add_common(CLI::App* app, Common& c, bool needs_config) {
  auto* opt = app->add_option("--config", c.config, "run configuration (key = value lines)");
  if (needs_config) opt->required();
  app->add_option("--mode", c.mode, "batch-semantic | batch-panoptic | incremental-semantic | incremental-panoptic");
  app->add_option("--seed", c.seed, "seed for every random stream");
  app->add_option("--threads", c.threads, "worker threads (1 = bit-reproducible)")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory");
}

RunConfig load_config(const Common& c) {
  std::optional<MapMode> mode;
  if (!c.mode.empty()) mode = parse_map_mode(c.mode);
  RunConfig cfg = RunConfig::load(c.config, mode);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  set_thread_count(cfg.threads);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string sidecar_path(const fs::path& ply) {
  fs::path p = ply;
  return p.replace_extension(".classes.txt").string();
}

// --- train ---------------------------------------------------------------------

int cmd_train(const Common& c, RunManifest& man) {
  const RunConfig cfg = load_config(c);
  man.set_config(c.config, cfg.dump());
  man.set_seed(cfg.seed, cfg.threads);
  fs::create_directories(c.out);
  write_text(c.out / "config.txt", cfg.dump());

  Dataset data;
  {
    RunManifest::Stage s(man, "load");
    data = load_dataset(cfg);
  }
  size_t points = 0;
  for (const auto& scan : data.scans) points += scan.size();
  std::printf("loaded %zu scans, %zu points", data.scans.size(), points);
  if (data.stats.unknown_classes) std::printf(" (%zu with unknown classes)", data.stats.unknown_classes);
  std::printf("\n");
  if (data.vocab.overflow_count()) {
    std::printf("warning: %zu instance ids beyond q_max=%zu map to 0\n", data.vocab.overflow_count(), cfg.data.q_max);
  }
  MapModel model = build_model(cfg, data);
  std::vector<LossRecord> history;
  const fs::path checkpoint = c.out / "model.lnsf", losses = c.out / "loss.csv";
  man.add_output("checkpoint", checkpoint);
  man.add_output("loss_csv", losses);
  int code = kOk;
  std::string error;
  {
    RunManifest::Stage s(man, "train");
    try {
      train_model(cfg, data, model, [&](const LossRecord& r) {
        history.push_back(r);
        if (r.step % 100 == 0) {
          std::printf("step %6lld  L1 %.5f  L2 %.5f  L3 %.5f  L4 %.5f  L5 %.5f  total %.5f\n",
                      static_cast<long long>(r.step), r.terms.l1, r.terms.l2, r.terms.l3, r.terms.l4, r.terms.l5,
                      r.terms.total);
        }
      });
    } catch (const TrainingError& e) {
      // The model still holds the last good parameters.
      error = e.what();
      code = kRuntime;
      std::fprintf(stderr, "error: %s; last good state saved to %s\n", e.what(), checkpoint.string().c_str());
    }
  }
  model.save(checkpoint);
  write_loss_csv(losses, history);
  std::printf("corners %zu, checkpoint %s\n", model.grid.corner_count(), checkpoint.string().c_str());
  man.add_value("steps", std::to_string(history.size()));
  man.add_value("corners", std::to_string(model.grid.corner_count()));
  if (code != kOk) man.add_value("training_error", error);
  return code;
}

// --- mesh ----------------------------------------------------------------------

int cmd_mesh(const Common& c, fs::path checkpoint, std::optional<double> s_cube, fs::path output, RunManifest& man) {
  RunConfig cfg = load_config(c);
  if (s_cube) {
    if (!(*s_cube > 0.0)) throw ConfigError("--s-cube must be positive");
    cfg.s_cube = *s_cube;
  }
  man.set_config(c.config, cfg.dump());
  man.set_seed(cfg.seed, cfg.threads);
  if (checkpoint.empty()) checkpoint = c.out / "model.lnsf";
  if (output.empty()) output = c.out / "mesh.ply";
  if (!fs::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint.string());
  man.add_input("checkpoint", checkpoint);
  const MapModel model = MapModel::load(checkpoint);
  if (model.panoptic() != is_panoptic(cfg.mode)) {
    throw ConfigError("checkpoint " + checkpoint.string() + (model.panoptic() ? " is" : " is not") +
                      " panoptic but mode is " + to_string(cfg.mode));
  }
  const Palette palette = load_palette(cfg);
  if (model.class_count() != palette.class_count()) {
    throw ConfigError("checkpoint predicts " + std::to_string(model.class_count()) + " classes, palette has " +
                      std::to_string(palette.class_count()));
  }
  SemanticMesh mesh;
  {
    RunManifest::Stage s(man, "mesh");
    mesh = mesh_model(cfg, model, palette);
  }
  const CubeCounts counts = model.grid.map_cube_counts(cfg.s_cube);
  std::printf("cubes %lld x %lld x %lld at s_cube %g m\n", static_cast<long long>(counts.mx),
              static_cast<long long>(counts.my), static_cast<long long>(counts.mz), cfg.s_cube);
  std::printf("mesh: %zu vertices, %zu triangles\n", mesh.vertex_count(), mesh.triangle_count());
  fs::create_directories(output.parent_path().empty() ? fs::path(".") : output.parent_path());
  write_ply(output, mesh);
  palette.write_sidecar(sidecar_path(output));
  man.add_output("mesh", output);
  man.add_output("classes", sidecar_path(output));
  man.add_value("cubes", std::to_string(counts.mx) + "x" + std::to_string(counts.my) + "x" + std::to_string(counts.mz));
  man.add_value("vertices", std::to_string(mesh.vertex_count()));
  man.add_value("triangles", std::to_string(mesh.triangle_count()));
  return kOk;
}

// --- eval ----------------------------------------------------------------------

constexpr double kObservedRadius = 0.2;

LabeledPoints synthetic_truth(const RunConfig& cfg) {
  if (cfg.data.source != DataSource::synth) {
    throw ConfigError("eval: --truth is required for non-synthetic data");
  }
  const Dataset data = load_dataset(cfg);
  const RigidTransform to_frame =
      cfg.data.submap_frame ? data.reference_pose.inverse() : RigidTransform::identity();
  return observed_surface(*data.synth, data.scans, cfg.eval_points, kObservedRadius, cfg.seed + 1, to_frame);
}

int cmd_eval(const Common& c, fs::path mesh_path, const fs::path& truth_path, std::vector<double> taus,
             bool class_agnostic, RunManifest& man) {
  const RunConfig cfg = load_config(c);
  man.set_config(c.config, cfg.dump());
  man.set_seed(cfg.seed, cfg.threads);
  if (taus.empty()) taus = cfg.taus;
  if (mesh_path.empty()) mesh_path = c.out / "mesh.ply";
  man.add_input("mesh", mesh_path);
  LabeledPoints truth;
  {
    RunManifest::Stage s(man, "ground_truth");
    if (!truth_path.empty()) {
      man.add_input("truth", truth_path);
      truth = read_point_ply(truth_path);
    } else {
      truth = synthetic_truth(cfg);
    }
  }
  std::vector<MetricReport> reports;
  {
    RunManifest::Stage s(man, "metrics");
    const LabeledPoints recon = sample_surface(read_ply(mesh_path), cfg.eval_points, cfg.seed + 2);
    for (double tau : taus) {
      if (!(tau > 0.0)) throw ConfigError("tau must be positive");
      reports.push_back(reconstruction_metrics(recon, truth, tau, !class_agnostic));
      std::printf("%s\n", format_report(reports.back()).c_str());
    }
  }
  fs::create_directories(c.out);
  write_metric_csv(c.out / "metrics.csv", reports);
  man.add_output("metrics", c.out / "metrics.csv");
  if (!class_agnostic) {
    write_class_csv(c.out / "classes.csv", reports.front(), load_palette(cfg));
    man.add_output("per_class", c.out / "classes.csv");
  }
  return kOk;
}

// --- merge ---------------------------------------------------------------------

int cmd_merge(const Common& c, const fs::path& manifest_path, RunManifest& man) {
  const MergeManifest mm = MergeManifest::load(manifest_path);
  man.add_input("manifest", manifest_path);
  Common cc = c;
  cc.config = mm.data;
  RunConfig cfg = load_config(cc);
  cfg.data.submap_frame = true;
  man.set_config(mm.data, cfg.dump());
  man.set_seed(cfg.seed, cfg.threads);
  const Palette palette = load_palette(cfg);

  std::vector<Submap> submaps;
  {
    RunManifest::Stage s(man, "submaps");
    for (size_t i = 0; i < mm.submaps.size(); ++i) {
      const auto& e = mm.submaps[i];
      man.add_input("submap" + std::to_string(i), e.checkpoint);
      const MapModel model = MapModel::load(e.checkpoint);
      Submap sm;
      sm.name = e.checkpoint.filename().string();
      sm.mesh = mesh_model(cfg, model, palette);
      const Dataset data = load_dataset(cfg, e.first_scan, e.last_scan);
      sm.initial_pose = data.reference_pose;
      if (i > 0) {
        const int shared = mm.overlap(i);
        std::vector<Vec3> pts, views;
        for (size_t k = 0; k < data.scans.size() && data.scan_ids[k] < e.first_scan + shared; ++k) {
          pts.insert(pts.end(), data.scans[k].endpoints.begin(), data.scans[k].endpoints.end());
          views.insert(views.end(), data.scans[k].size(), data.scans[k].origin);
        }
        sm.overlap = orient_points(pts, views);
      }
      std::printf("submap %zu (%s): scans %d-%d, %zu triangles\n", i, sm.name.c_str(), e.first_scan, e.last_scan,
                  sm.mesh.triangle_count());
      submaps.push_back(std::move(sm));
    }
  }
  MergeConfig mc;
  mc.s_cube = cfg.s_cube;
  mc.seed = cfg.seed;
  MergeResult result;
  {
    RunManifest::Stage s(man, "align");
    result = merge_submaps(submaps, mc);
  }
  for (size_t p = 0; p < result.pairs.size(); ++p) {
    const auto& r = result.pairs[p];
    std::printf("pair %zu-%zu: residual %.5f m, %zu correspondences, %d iterations%s\n", p, p + 1, r.residual,
                r.correspondences, r.iterations, r.converged ? "" : " (not converged)");
    man.add_value("pair" + std::to_string(p) + "_residual", std::to_string(r.residual));
    man.add_value("submap" + std::to_string(p + 1) + "_to_first", format_pose_line(result.to_first[p + 1]));
  }
  fs::path output = mm.output.empty() ? c.out / "merged.ply" : mm.output;
  fs::create_directories(output.parent_path().empty() ? fs::path(".") : output.parent_path());
  write_ply(output, result.mesh);
  palette.write_sidecar(sidecar_path(output));
  man.add_output("mesh", output);
  std::printf("merged mesh: %zu vertices, %zu triangles -> %s\n", result.mesh.vertex_count(),
              result.mesh.triangle_count(), output.string().c_str());
  return kOk;
}

// --- synth ---------------------------------------------------------------------

int cmd_synth(const Common& c, const fs::path& scene_path, int scans, int rays, size_t truth_points,
              RunManifest& man) {
  const uint64_t seed = c.seed.value_or(42);
  set_thread_count(c.threads.value_or(1));
  man.set_seed(seed, c.threads.value_or(1));
  man.add_input("scene", scene_path);
  if (scans < 1 || rays < 1) throw ConfigError("synth: --scans and --rays must be positive");
  const SceneSpec spec = SceneSpec::load(scene_path);
  const SynthScene scene = synth_scene(spec, scans, rays, seed);
  const Palette palette = c.config.empty() ? Palette::semantic_kitti() : load_palette(load_config(c));

  fs::create_directories(c.out / "velodyne");
  fs::create_directories(c.out / "labels");
  std::vector<RigidTransform> poses;
  for (size_t s = 0; s < scene.scans.size(); ++s) {
    const LabeledScan& scan = scene.scans[s];
    const RigidTransform to_sensor = scan.pose.inverse();
    RawScan raw;
    for (size_t i = 0; i < scan.size(); ++i) {
      const Vec3 p = to_sensor.apply(scan.endpoints[i]);
      raw.points.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z()), 0.0f});
      raw.labels.push_back(palette.raw_id(scan.labels[i]) | (scan.instances[i] << 16));
    }
    char name[32];
    std::snprintf(name, sizeof name, "%06zu", s);
    write_raw_scan(c.out / "velodyne" / (std::string(name) + ".bin"), c.out / "labels" / (std::string(name) + ".label"),
                   raw);
    poses.push_back(scan.pose);
  }
  write_poses(c.out / "poses.txt", poses);
  write_text(c.out / "calib.txt", "Tr: 1 0 0 0 0 1 0 0 0 0 1 0\n");
  const LabeledPoints truth =
      observed_surface(scene, scene.scans, truth_points, kObservedRadius, seed + 1);
  write_point_ply(c.out / "truth.ply", truth);
  man.add_output("sequence", c.out);
  man.add_output("truth", c.out / "truth.ply");
  std::printf("wrote %zu scans and %zu ground-truth points to %s\n", scene.scans.size(), truth.size(),
              c.out.string().c_str());
  return kOk;
}

// --- suite ---------------------------------------------------------------------

int cmd_suite(const Common& c, std::vector<std::string> names, const fs::path& scenes, RunManifest& man) {
  if (names.size() == 1 && names[0] == "all") names = suite_names();
  set_thread_count(c.threads.value_or(1));
  SuiteOptions opt;
  opt.scene_dir = scenes;
  opt.seed = c.seed.value_or(42);
  opt.log = &std::cout;
  man.set_seed(opt.seed, c.threads.value_or(1));
  fs::create_directories(c.out);
  std::vector<std::string> failed;
  std::string summary;
  for (const auto& n : names) {
    SuiteReport r;
    {
      RunManifest::Stage s(man, n);
      r = run_suite(n, opt);
    }
    write_text(c.out / ("suite_" + n + ".csv"), r.csv());
    man.add_output(n, c.out / ("suite_" + n + ".csv"));
    std::cout << r.summary();
    summary += r.summary();
    if (!r.passed()) failed.push_back(n);
  }
  write_text(c.out / "suite_summary.txt", summary);
  if (!failed.empty()) {
    std::string list;
    for (const auto& f : failed) list += " " + f;
    std::fprintf(stderr, "failed suites:%s\n", list.c_str());
    return kFailed;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic neural mapping from LiDAR scans"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "semap 0.1.0");

  Common common;
  auto* train = app.add_subcommand("train", "allocate the grid and optimize features and decoders");
  add_common(train, common, true);

  auto* mesh = app.add_subcommand("mesh", "extract and label a mesh from a checkpoint");
  add_common(mesh, common, true);
  fs::path checkpoint, mesh_out;
  std::optional<double> s_cube;
  mesh->add_option("--checkpoint", checkpoint, "model snapshot (default <out>/model.lnsf)");
  mesh->add_option("--s-cube", s_cube, "marching-cubes lattice size in meters");
  mesh->add_option("--ply", mesh_out, "output mesh (default <out>/mesh.ply)");

  auto* eval = app.add_subcommand("eval", "accuracy, completion, chamfer and F-score against ground truth");
  add_common(eval, common, true);
  fs::path eval_mesh, truth;
  std::vector<double> taus;
  bool agnostic = false;
  eval->add_option("--mesh", eval_mesh, "reconstructed mesh (default <out>/mesh.ply)");
  eval->add_option("--truth", truth, "ground-truth point PLY (synthetic configs may omit it)");
  eval->add_option("--tau", taus, "distance thresholds in meters (default from config)");
  eval->add_flag("--class-agnostic", agnostic, "plain nearest neighbors instead of same-class");

  auto* merge = app.add_subcommand("merge", "align and fuse submap meshes");
  add_common(merge, common, false);
  fs::path manifest;
  merge->add_option("--manifest", manifest, "merge manifest")->required()->check(CLI::ExistingFile);

  auto* synth = app.add_subcommand("synth", "render a synthetic scene as a KITTI-style sequence");
  add_common(synth, common, false);
  fs::path scene;
  int scans = 10, rays = 4000;
  size_t truth_points = 200000;
  synth->add_option("--scene", scene, "scene spec")->required()->check(CLI::ExistingFile);
  synth->add_option("--scans", scans, "scan count");
  synth->add_option("--rays", rays, "rays per scan");
  synth->add_option("--truth-points", truth_points, "surface samples drawn before keeping observed ones");

  auto* suite = app.add_subcommand("suite", "run synthetic verification suites");
  add_common(suite, common, false);
  std::vector<std::string> names;
  fs::path scenes;
  suite->add_option("names", names, "suite names or 'all'")->required();
  suite->add_option("--scenes", scenes, "scene fixture directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunManifest man(sub->get_name(), std::vector<std::string>(argv, argv + argc));
  int code = kOk;
  std::string error;
  try {
    if (sub == train) code = cmd_train(common, man);
    else if (sub == mesh) code = cmd_mesh(common, checkpoint, s_cube, mesh_out, man);
    else if (sub == eval) code = cmd_eval(common, eval_mesh, truth, taus, agnostic, man);
    else if (sub == merge) code = cmd_merge(common, manifest, man);
    else if (sub == synth) code = cmd_synth(common, scene, scans, rays, truth_points, man);
    else code = cmd_suite(common, names, scenes, man);
  } catch (const ConfigError& e) {
    error = e.what();
    code = kConfig;
  } catch (const AlignmentError& e) {
    error = e.what();
    code = kAlignment;
  } catch (const std::exception& e) {
    error = e.what();
    code = kRuntime;
  }
  if (!error.empty()) std::fprintf(stderr, "error: %s\n", error.c_str());
  try {
    man.write(common.out, code, error);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    if (code == kOk) code = kRuntime;
  }
  return code;
}
