#include "semap/mesher.hpp"

#include "semap/error.hpp"
#include "semap/parallel.hpp"

namespace semap {

void SemanticMesh::validate() const {
  const size_t n = vertices.size();
  if (class_id.size() != n || instance_id.size() != n || rgb.size() != n) {
    throw ContractError("mesh: attribute count does not match vertex count");
  }
  for (const auto& t : triangles) {
    for (uint32_t i : t) {
      if (i >= n) throw ContractError("mesh: triangle index out of range");
    }
  }
}

CubeLattice map_lattice(const OctreeFeatureGrid& grid, double s_cube) {
  const CubeCounts m = grid.map_cube_counts(s_cube);
  return {grid.metric_bounds().first, s_cube, {m.mx, m.my, m.mz}};
}

TriangleMesh extract_mesh(const MapModel& model, double s_cube, double iso, int block) {
  if (!(s_cube > 0.0)) throw ConfigError("mesh: s_cube must be positive");
  if (model.grid.empty()) return {};
  const ScalarField field = [&](std::span<const Vec3> xs, std::span<double> values, std::span<uint8_t> valid) {
    model.sdf_batch(xs, values, valid);
  };
  return marching_cubes(map_lattice(model.grid, s_cube), field, iso, block);
}

SemanticMesh attach_labels(const TriangleMesh& mesh, std::vector<uint16_t> classes, std::vector<uint16_t> instances,
                           const Palette& palette) {
  SemanticMesh out;
  out.vertices = mesh.vertices;
  out.triangles = mesh.triangles;
  out.class_id = std::move(classes);
  out.instance_id = std::move(instances);
  out.rgb.resize(out.vertices.size());
  if (out.class_id.size() != out.vertices.size() || out.instance_id.size() != out.vertices.size()) {
    throw ContractError("mesh: label count does not match vertex count");
  }
  for (size_t i = 0; i < out.vertices.size(); ++i) {
    const int c = out.class_id[i] < palette.class_count() ? out.class_id[i] : 0;
    out.rgb[i] = palette.info(c).rgb;
  }
  return out;
}

SemanticMesh label_mesh(const TriangleMesh& mesh, const MapModel& model, const Palette& palette) {
  const size_t n = mesh.vertices.size();
  std::vector<uint16_t> classes(n, 0), instances(n, 0);
  if (model.has_semantics() && n > 0) {
    constexpr size_t kChunk = 1024;
    const size_t chunks = (n + kChunk - 1) / kChunk;
    const int split = model.semantic_split;
    const int width = model.grid.merged_dim(FeatureTable::semantic);
    parallel_for(chunks, [&](size_t c) {
      const size_t begin = c * kChunk, end = std::min(n, begin + kChunk);
      std::vector<size_t> ids;
      std::vector<std::vector<double>> feats;
      for (size_t i = begin; i < end; ++i) {
        auto f = model.grid.query_concat(mesh.vertices[i], FeatureTable::semantic);
        if (!f) continue;
        ids.push_back(i);
        feats.push_back(std::move(*f));
      }
      if (ids.empty()) return;
      const auto m = static_cast<Eigen::Index>(ids.size());
      Eigen::MatrixXd z(width, m);
      for (Eigen::Index j = 0; j < m; ++j) z.col(j) = Eigen::Map<const Eigen::VectorXd>(feats[j].data(), width);
      const Eigen::MatrixXd logits = mlp_forward(model.snf, z.topRows(split));
      Eigen::MatrixXd inst;
      if (model.panoptic()) inst = mlp_forward(model.instance_head, z.bottomRows(width - split));
      std::vector<double> col;
      for (Eigen::Index j = 0; j < m; ++j) {
        col.assign(logits.col(j).data(), logits.col(j).data() + logits.rows());
        const int cls = argmax(col);
        classes[ids[j]] = static_cast<uint16_t>(cls);
        if (model.panoptic() && cls < palette.class_count() && palette.is_thing(cls)) {
          col.assign(inst.col(j).data(), inst.col(j).data() + inst.rows());
          instances[ids[j]] = static_cast<uint16_t>(argmax(col));
        }
      }
    });
  }
  return attach_labels(mesh, std::move(classes), std::move(instances), palette);
}

SemanticMesh select_triangles(const SemanticMesh& mesh, const std::vector<uint8_t>& keep) {
  SemanticMesh out;
  std::vector<uint32_t> remap(mesh.vertices.size(), UINT32_MAX);
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (!keep[t]) continue;
    std::array<uint32_t, 3> tri;
    for (int k = 0; k < 3; ++k) {
      const uint32_t v = mesh.triangles[t][k];
      if (remap[v] == UINT32_MAX) {
        remap[v] = static_cast<uint32_t>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
        out.class_id.push_back(mesh.class_id[v]);
        out.instance_id.push_back(mesh.instance_id[v]);
        out.rgb.push_back(mesh.rgb[v]);
      }
      tri[k] = remap[v];
    }
    out.triangles.push_back(tri);
  }
  return out;
}

SemanticMesh filter_dynamic(const SemanticMesh& mesh, const std::set<int>& dynamic, const Palette& palette) {
  for (int c : dynamic) {
    if (c < 0 || c >= palette.class_count()) throw ConfigError("dynamic class " + std::to_string(c) + " not in palette");
  }
  if (dynamic.empty()) return mesh;
  std::vector<uint8_t> keep(mesh.triangles.size(), 1);
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    bool all = true;
    for (uint32_t v : mesh.triangles[t]) all = all && dynamic.count(mesh.class_id[v]) > 0;
    keep[t] = !all;
  }
  return select_triangles(mesh, keep);
}

}  // namespace semap
