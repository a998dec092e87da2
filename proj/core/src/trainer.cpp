#include "semap/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "semap/error.hpp"
#include "semap/parallel.hpp"

namespace semap {
namespace {

constexpr size_t kChunk = 256;

/// Per-sample stencils at every level plus the completeness flags.
struct PreparedBatch {
  int levels = 0;
  std::vector<Stencil> stencils;  // sample-major, levels per sample
  std::vector<uint8_t> level_ok;
  std::vector<size_t> valid;      // batch indices with a complete finest level

  const Stencil& at(size_t i, int level) const { return stencils[i * levels + level]; }
  bool ok(size_t i, int level) const { return level_ok[i * levels + level] != 0; }
};

PreparedBatch prepare(const OctreeFeatureGrid& grid, std::span<const TrainingSample> batch) {
  PreparedBatch p;
  p.levels = grid.levels();
  p.stencils.resize(batch.size() * p.levels);
  p.level_ok.resize(batch.size() * p.levels);
  for (size_t i = 0; i < batch.size(); ++i) {
    for (int k = 0; k < p.levels; ++k) {
      Stencil& st = p.stencils[i * p.levels + k];
      st = grid.stencil(batch[i].x, k);
      p.level_ok[i * p.levels + k] = st.complete();
    }
    if (p.level_ok[i * p.levels]) p.valid.push_back(i);
  }
  return p;
}

int block_offset(const OctreeFeatureGrid& grid, FeatureTable table, int level) {
  return grid.config().merge == LevelMerge::concat ? (grid.levels() - 1 - level) * grid.dim(table) : 0;
}

/// Interpolated merged features for one sample into column `col` of `z`.
void gather(const OctreeFeatureGrid& grid, const PreparedBatch& p, size_t i, FeatureTable table,
            Eigen::MatrixXd& z, Eigen::Index col) {
  const int h = grid.dim(table);
  for (int k = 0; k < p.levels; ++k) {
    if (!p.ok(i, k)) continue;
    const Stencil& st = p.at(i, k);
    const int off = block_offset(grid, table, k);
    for (int c = 0; c < 8; ++c) {
      const auto f = grid.features(table, st.slots[c]);
      const double w = st.weights[c];
      for (int r = 0; r < h; ++r) z(off + r, col) += w * f[r];
    }
  }
}

/// Chains dL/dz (merged feature) back to corner features through the trilinear weights.
void scatter(const OctreeFeatureGrid& grid, const PreparedBatch& p, size_t i, FeatureTable table,
             const Eigen::MatrixXd& dz, Eigen::Index col, SparseRows& out) {
  const int h = grid.dim(table);
  for (int k = 0; k < p.levels; ++k) {
    if (!p.ok(i, k)) continue;
    const Stencil& st = p.at(i, k);
    const int off = block_offset(grid, table, k);
    for (int c = 0; c < 8; ++c) {
      auto row = out.row(st.slots[c]);
      const double w = st.weights[c];
      for (int r = 0; r < h; ++r) row[r] += w * dz(off + r, col);
    }
  }
}

/// ∇ₓ f = Σ_levels Σ_corners ∇w_c (F_c · g_level), g = ∂f/∂z.
Vec3 spatial_gradient(const OctreeFeatureGrid& grid, const PreparedBatch& p, size_t i, const Eigen::MatrixXd& g,
                      Eigen::Index col) {
  const int h = grid.dim(FeatureTable::geometry);
  Vec3 u = Vec3::Zero();
  for (int k = 0; k < p.levels; ++k) {
    if (!p.ok(i, k)) continue;
    const Stencil& st = p.at(i, k);
    const int off = block_offset(grid, FeatureTable::geometry, k);
    for (int c = 0; c < 8; ++c) {
      const auto f = grid.features(FeatureTable::geometry, st.slots[c]);
      double dot = 0.0;
      for (int r = 0; r < h; ++r) dot += f[r] * g(off + r, col);
      u += dot * st.weight_grads[c];
    }
  }
  return u;
}

struct ChunkResult {
  double sum1 = 0.0, sum2 = 0.0, sum4 = 0.0, sum5 = 0.0;
  ModelGradient l1;
  ModelGradient rest;
};

struct Counts {
  size_t valid = 0, surface = 0, labeled = 0, instanced = 0;
};

bool supervises_semantics(const TrainingSample& s) { return s.band == Band::surface && s.class_id > 0; }

void evaluate_chunk(const MapModel& model, std::span<const TrainingSample> batch, const PreparedBatch& p,
                    std::span<const size_t> ids, const ObjectiveContext& ctx, const Counts& counts, bool want_grad,
                    ChunkResult& out) {
  const OctreeFeatureGrid& grid = model.grid;
  const auto n = static_cast<Eigen::Index>(ids.size());
  const LossWeights& w = ctx.weights;

  Eigen::MatrixXd zg = Eigen::MatrixXd::Zero(grid.merged_dim(FeatureTable::geometry), n);
  for (Eigen::Index j = 0; j < n; ++j) gather(grid, p, ids[j], FeatureTable::geometry, zg, j);

  ForwardTrace trace;
  const Eigen::MatrixXd pred = mlp_forward(model.gnf, zg, &trace);

  // L1
  Eigen::MatrixXd u1(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const TrainingSample& s = batch[ids[j]];
    const ScalarLoss l = sdf_bce(pred(0, j), s.d, w.alpha);
    out.sum1 += l.value;
    u1(0, j) = l.grad / static_cast<double>(counts.valid);
  }
  if (want_grad) {
    const Eigen::MatrixXd dz = mlp_backward_accumulate(model.gnf, trace, u1, out.l1.gnf);
    for (Eigen::Index j = 0; j < n; ++j) scatter(grid, p, ids[j], FeatureTable::geometry, dz, j, out.l1.geo);
  }

  // L2 on surface-band samples
  bool any_surface = false;
  for (size_t i : ids) any_surface |= batch[i].band == Band::surface;
  if (any_surface) {
    const Eigen::MatrixXd g = mlp_input_gradient(model.gnf, trace, Eigen::MatrixXd::Ones(1, n));
    const bool grad2 = want_grad && w.lambda2 > 0.0;
    const double c2 = counts.surface ? w.lambda2 / static_cast<double>(counts.surface) : 0.0;
    Eigen::MatrixXd tangent = Eigen::MatrixXd::Zero(zg.rows(), n);
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(1, n);
    const int h = grid.dim(FeatureTable::geometry);
    for (Eigen::Index j = 0; j < n; ++j) {
      const size_t i = ids[j];
      if (batch[i].band != Band::surface) continue;
      const Vec3 u = spatial_gradient(grid, p, i, g, j);
      const double norm = u.norm();
      out.sum2 += std::abs(norm - 1.0);
      if (!grad2 || norm == 0.0) continue;
      const Vec3 a = (norm > 1.0 ? 1.0 : -1.0) * u / norm;  // d L2 / d u
      upstream(0, j) = c2;
      for (int k = 0; k < p.levels; ++k) {
        if (!p.ok(i, k)) continue;
        const Stencil& st = p.at(i, k);
        const int off = block_offset(grid, FeatureTable::geometry, k);
        for (int c = 0; c < 8; ++c) {
          const double s = a.dot(st.weight_grads[c]);
          const auto f = grid.features(FeatureTable::geometry, st.slots[c]);
          auto row = out.rest.geo.row(st.slots[c]);
          for (int r = 0; r < h; ++r) {
            tangent(off + r, j) += s * f[r];
            row[r] += c2 * s * g(off + r, j);
          }
        }
      }
    }
    if (grad2) mlp_tangent_weight_grad(model.gnf, trace, tangent, upstream, out.rest.gnf);
  }

  if (!model.has_semantics()) return;

  // L4 / L5 on labeled surface samples
  std::vector<Eigen::Index> sem_cols;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (supervises_semantics(batch[ids[j]])) sem_cols.push_back(j);
  }
  if (sem_cols.empty()) return;
  const auto m = static_cast<Eigen::Index>(sem_cols.size());
  const int sem_in = grid.merged_dim(FeatureTable::semantic);
  Eigen::MatrixXd zs = Eigen::MatrixXd::Zero(sem_in, m);
  for (Eigen::Index q = 0; q < m; ++q) gather(grid, p, ids[sem_cols[q]], FeatureTable::semantic, zs, q);
  Eigen::MatrixXd dzs = Eigen::MatrixXd::Zero(sem_in, m);
  bool sem_grad_used = false;

  {
    const int split = model.semantic_split;
    ForwardTrace st;
    const Eigen::MatrixXd logits = mlp_forward(model.snf, zs.topRows(split), &st);
    const bool grad4 = want_grad && w.lambda4 > 0.0;
    const double c4 = w.lambda4 / static_cast<double>(counts.labeled);
    Eigen::MatrixXd up(logits.rows(), m);
    std::vector<double> lg(static_cast<size_t>(logits.rows())), gr(lg.size());
    for (Eigen::Index q = 0; q < m; ++q) {
      for (Eigen::Index r = 0; r < logits.rows(); ++r) lg[r] = logits(r, q);
      const int target = batch[ids[sem_cols[q]]].class_id;
      if (target >= static_cast<int>(lg.size())) throw ContractError("objective: class id exceeds decoder width");
      out.sum4 += cross_entropy(lg, target, gr);
      for (Eigen::Index r = 0; r < logits.rows(); ++r) up(r, q) = c4 * gr[r];
    }
    if (grad4) {
      const Eigen::MatrixXd d = mlp_backward_accumulate(model.snf, st, up, out.rest.snf);
      dzs.topRows(split) += d;
      sem_grad_used = true;
    }
  }

  if (model.panoptic()) {
    const int split = model.semantic_split;
    ForwardTrace it;
    const Eigen::MatrixXd logits = mlp_forward(model.instance_head, zs.bottomRows(sem_in - split), &it);
    const bool grad5 = want_grad && w.lambda5 > 0.0;
    const double c5 = w.lambda5 / static_cast<double>(counts.instanced);
    Eigen::MatrixXd up(logits.rows(), m);
    std::vector<double> lg(static_cast<size_t>(logits.rows())), gr(lg.size());
    for (Eigen::Index q = 0; q < m; ++q) {
      for (Eigen::Index r = 0; r < logits.rows(); ++r) lg[r] = logits(r, q);
      const TrainingSample& s = batch[ids[sem_cols[q]]];
      const bool thing = static_cast<size_t>(s.class_id) < ctx.thing_classes.size() && ctx.thing_classes[s.class_id];
      int target = instance_target(thing, s.instance_id);
      if (target >= static_cast<int>(lg.size())) target = 0;
      out.sum5 += cross_entropy(lg, target, gr);
      for (Eigen::Index r = 0; r < logits.rows(); ++r) up(r, q) = c5 * gr[r];
    }
    if (grad5) {
      const Eigen::MatrixXd d = mlp_backward_accumulate(model.instance_head, it, up, out.rest.instance);
      dzs.bottomRows(sem_in - split) += d;
      sem_grad_used = true;
    }
  }

  if (sem_grad_used) {
    for (Eigen::Index q = 0; q < m; ++q) scatter(grid, p, ids[sem_cols[q]], FeatureTable::semantic, dzs, q, out.rest.sem);
  }
}

}  // namespace

void TrainConfig::validate() const {
  weights.validate(mode);
  if (batch_steps < 0 || steps_per_scan < 0) throw ConfigError("train: step counts must be non-negative");
  if (rays_per_step == 0) throw ConfigError("train: rays_per_step must be positive");
  if (sampler.samples_per_ray < 2 || sampler.samples_per_ray % 2) {
    throw ConfigError("train: samples per ray must be even and >= 2");
  }
  if (!(sampler.band_width > 0.0)) throw ConfigError("train: band width must be positive");
  if (sampler.min_range < 0.0) throw ConfigError("train: min_range must be non-negative");
  if (!(feature_adam.lr > 0.0) || !(decoder_adam.lr > 0.0)) throw ConfigError("train: learning rates must be positive");
  if (is_panoptic(mode) && !(sigma > 0.0 && sigma < 1.0)) throw ConfigError("train: sigma must be in (0,1)");
}

LossTerms total_loss(const MapModel& model, std::span<const TrainingSample> batch, const ObjectiveContext& ctx,
                     ModelGradient* grad, ModelGradient* l1_grad) {
  const PreparedBatch p = prepare(model.grid, batch);
  Counts counts;
  counts.valid = p.valid.size();
  for (size_t i : p.valid) {
    const TrainingSample& s = batch[i];
    if (s.band == Band::surface) ++counts.surface;
    if (model.has_semantics() && supervises_semantics(s)) {
      ++counts.labeled;
      if (model.panoptic()) ++counts.instanced;
    }
  }

  LossTerms t;
  t.samples = counts.valid;
  t.surface = counts.surface;
  t.labeled = counts.labeled;
  t.instanced = counts.instanced;

  const bool want_grad = grad != nullptr || l1_grad != nullptr;
  const size_t chunks = (p.valid.size() + kChunk - 1) / kChunk;
  std::vector<ChunkResult> results(chunks);
  for (auto& r : results) {
    if (want_grad) {
      r.l1 = ModelGradient::zeros_like(model);
      r.rest = ModelGradient::zeros_like(model);
    }
  }
  parallel_for(chunks, [&](size_t c) {
    const size_t begin = c * kChunk;
    const size_t end = std::min(p.valid.size(), begin + kChunk);
    evaluate_chunk(model, batch, p, std::span(p.valid).subspan(begin, end - begin), ctx, counts, want_grad,
                   results[c]);
  });

  double s1 = 0.0, s2 = 0.0, s4 = 0.0, s5 = 0.0;
  for (const auto& r : results) {
    s1 += r.sum1;
    s2 += r.sum2;
    s4 += r.sum4;
    s5 += r.sum5;
    if (grad) {
      grad->add_scaled(r.l1, 1.0);
      grad->add_scaled(r.rest, 1.0);
    }
    if (l1_grad) l1_grad->add_scaled(r.l1, 1.0);
  }
  auto mean = [](double s, size_t n) { return n ? s / static_cast<double>(n) : 0.0; };
  t.l1 = mean(s1, counts.valid);
  t.l2 = mean(s2, counts.surface);
  t.l4 = mean(s4, counts.labeled);
  t.l5 = mean(s5, counts.instanced);

  const LossWeights& w = ctx.weights;
  if (is_incremental(ctx.mode) && ctx.importance != nullptr) {
    t.l3 = forgetting_loss(model, *ctx.importance, (grad && w.lambda3 > 0.0) ? grad : nullptr, w.lambda3);
  }
  t.total = t.l1 + w.lambda2 * t.l2 + w.lambda4 * t.l4;
  if (is_incremental(ctx.mode)) t.total += w.lambda3 * t.l3;
  if (is_panoptic(ctx.mode)) t.total += w.lambda5 * t.l5;
  return t;
}

std::optional<Vec3> sdf_spatial_gradient(const MapModel& model, const Vec3& x) {
  TrainingSample s;
  s.x = x;
  const PreparedBatch p = prepare(model.grid, {&s, 1});
  if (p.valid.empty()) return std::nullopt;
  Eigen::MatrixXd zg = Eigen::MatrixXd::Zero(model.grid.merged_dim(FeatureTable::geometry), 1);
  gather(model.grid, p, 0, FeatureTable::geometry, zg, 0);
  ForwardTrace trace;
  mlp_forward(model.gnf, zg, &trace);
  const Eigen::MatrixXd g = mlp_input_gradient(model.gnf, trace, Eigen::MatrixXd::Ones(1, 1));
  return spatial_gradient(model.grid, p, 0, g, 0);
}

double eikonal_loss(const MapModel& model, std::span<const Vec3> xs) {
  double sum = 0.0;
  size_t n = 0;
  for (const Vec3& x : xs) {
    if (auto g = sdf_spatial_gradient(model, x)) {
      sum += eikonal_value(*g);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

size_t allocate_for_scans(OctreeFeatureGrid& grid, std::span<const LabeledScan> scans, double band_width,
                          const std::set<int>& skip_classes) {
  const double step = grid.voxel_size(0) * 0.5;
  const int n = std::max(1, static_cast<int>(std::ceil(band_width / step)));
  std::vector<Vec3> pts;
  size_t created = 0;
  for (const LabeledScan& scan : scans) {
    pts.clear();
    for (size_t i = 0; i < scan.size(); ++i) {
      if (skip_classes.count(scan.labels[i])) continue;
      const Vec3 delta = scan.endpoints[i] - scan.origin;
      const double len = delta.norm();
      if (!(len > 0.0)) continue;
      const Vec3 dir = delta / len;
      for (int k = -n; k <= n; ++k) {
        pts.push_back(scan.endpoints[i] + dir * (band_width * static_cast<double>(k) / n));
      }
    }
    created += grid.allocate_for_points(pts);
  }
  return created;
}

void FeatureAdam::apply(OctreeFeatureGrid& grid, const SparseRows& geo_grad, const SparseRows& sem_grad) {
  m_geo.resize(grid.raw(FeatureTable::geometry).size(), 0.0);
  v_geo.resize(m_geo.size(), 0.0);
  m_sem.resize(grid.raw(FeatureTable::semantic).size(), 0.0);
  v_sem.resize(m_sem.size(), 0.0);
  ++step;
  auto run = [&](FeatureTable table, const SparseRows& g, std::vector<double>& m, std::vector<double>& v) {
    const auto w = static_cast<size_t>(grid.dim(table));
    for (size_t r = 0; r < g.size(); ++r) {
      const size_t base = static_cast<size_t>(g.slot(r)) * w;
      adam_update(grid.features(table, g.slot(r)), g.row_at(r), {m.data() + base, w}, {v.data() + base, w}, step,
                  config);
    }
  };
  run(FeatureTable::geometry, geo_grad, m_geo, v_geo);
  run(FeatureTable::semantic, sem_grad, m_sem, v_sem);
}

TrainResult train(std::span<const LabeledScan> scans, MapModel& model, const TrainConfig& cfg,
                  const std::vector<uint8_t>& thing_classes, const StepCallback& on_step) {
  cfg.validate();
  if (scans.empty()) throw ContractError("train: no scans");
  if (is_panoptic(cfg.mode) != model.panoptic()) {
    throw ContractError("train: model decoders do not match mode " + to_string(cfg.mode));
  }
  if (!model.has_semantics()) throw ContractError("train: model has no semantic decoder");

  const bool incremental = is_incremental(cfg.mode);
  TrainResult result;
  ObjectiveContext ctx{cfg.mode, cfg.weights, thing_classes, nullptr};

  FeatureAdam feature_adam{cfg.feature_adam, {}, {}, {}, {}, 0};
  AdamState adam_gnf = AdamState::for_mlp(model.gnf, cfg.decoder_adam);
  AdamState adam_snf = AdamState::for_mlp(model.snf, cfg.decoder_adam);
  AdamState adam_inst = model.panoptic() ? AdamState::for_mlp(model.instance_head, cfg.decoder_adam) : AdamState{};

  ModelGradient grad = ModelGradient::zeros_like(model);
  ModelGradient l1_grad = ModelGradient::zeros_like(model);
  int64_t global_step = 0;

  auto run_step = [&](const BatchSampler& sampler, uint64_t local_step) {
    const auto batch = sampler.build_batch(local_step, cfg.rays_per_step);
    grad.clear();
    l1_grad.clear();
    const LossTerms terms = total_loss(model, batch, ctx, &grad, incremental ? &l1_grad : nullptr);
    const std::pair<const char*, double> named[] = {
        {"L1", terms.l1}, {"L2", terms.l2}, {"L3", terms.l3}, {"L4", terms.l4}, {"L5", terms.l5}};
    for (const auto& [name, v] : named) {
      if (!std::isfinite(v)) {
        throw TrainingError("training diverged at step " + std::to_string(global_step) + ": " + name +
                            " is not finite");
      }
    }
    if (const auto bad = grad.first_non_finite(); !bad.empty()) {
      throw TrainingError("training diverged at step " + std::to_string(global_step) + ": gradient of " + bad +
                          " is not finite");
    }
    adam_step(model.gnf, grad.gnf, adam_gnf, "gnf");
    adam_step(model.snf, grad.snf, adam_snf, "snf");
    if (model.panoptic()) adam_step(model.instance_head, grad.instance, adam_inst, "instance_head");
    feature_adam.apply(model.grid, grad.geo, grad.sem);
    if (incremental) result.importance.update_importance(l1_grad, cfg.weights.beta_max, model);
    LossRecord rec{global_step++, terms};
    result.history.push_back(rec);
    if (on_step) on_step(rec);
  };

  if (!incremental) {
    allocate_for_scans(model.grid, scans, cfg.sampler.band_width, cfg.dynamic_classes);
    BatchSampler sampler(scans, cfg.sampler, cfg.seed, cfg.dynamic_classes);
    for (int s = 0; s < cfg.batch_steps; ++s) run_step(sampler, static_cast<uint64_t>(s));
    return result;
  }

  result.importance = ImportanceStore::create(model);
  ctx.importance = &result.importance;
  for (size_t t = 0; t < scans.size(); ++t) {
    allocate_for_scans(model.grid, scans.subspan(t, 1), cfg.sampler.band_width, cfg.dynamic_classes);
    result.importance.sync_shapes(model);
    BatchSampler sampler(scans.subspan(t, 1), cfg.sampler, cfg.seed ^ (0x9e37ULL * (t + 1)), cfg.dynamic_classes);
    for (int s = 0; s < cfg.steps_per_scan; ++s) run_step(sampler, static_cast<uint64_t>(s));
    result.importance.commit(model);
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss history " + path.string());
  out << "step,L1,L2,L3,L4,L5,total\n";
  char buf[512];
  for (const auto& r : history) {
    const auto& t = r.terms;
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(r.step), t.l1,
                  t.l2, t.l3, t.l4, t.l5, t.total);
    out << buf;
  }
}

}  // namespace semap
