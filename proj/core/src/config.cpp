#include "semap/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "semap/error.hpp"

namespace semap {
namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
bool parse_int(const std::string& s, T& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_real(const std::string& s, double& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

// Binds a key to a setter that reports malformed values.
struct Field {
  std::function<bool(RunConfig&, const std::string&)> set;
  std::function<std::string(RunConfig&)> get;
};

using Table = std::map<std::string, Field>;

template <typename T, typename Ref>
Field integer(Ref ref) {
  return {[ref](RunConfig& c, const std::string& v) {
            T x{};
            if (!parse_int(v, x)) return false;
            ref(c) = x;
            return true;
          },
          [ref](RunConfig& c) { return std::to_string(ref(c)); }};
}

template <typename Ref>
Field real(Ref ref) {
  return {[ref](RunConfig& c, const std::string& v) {
            double x;
            if (!parse_real(v, x)) return false;
            ref(c) = x;
            return true;
          },
          [ref](RunConfig& c) { return num(ref(c)); }};
}

template <typename Ref>
Field path(Ref ref) {
  return {[ref](RunConfig& c, const std::string& v) {
            ref(c) = v;
            return true;
          },
          [ref](RunConfig& c) { return ref(c).string(); }};
}

template <typename Ref>
Field boolean(Ref ref) {
  return {[ref](RunConfig& c, const std::string& v) {
            if (v == "true" || v == "1") ref(c) = true;
            else if (v == "false" || v == "0") ref(c) = false;
            else return false;
            return true;
          },
          [ref](RunConfig& c) { return std::string(ref(c) ? "true" : "false"); }};
}

const Table& table() {
  static const Table t = [] {
    Table t;
    t["mode"] = {[](RunConfig& c, const std::string& v) {
                   try {
                     c.mode = parse_map_mode(v);
                   } catch (const ConfigError&) {
                     return false;
                   }
                   return true;
                 },
                 [](RunConfig& c) { return to_string(c.mode); }};
    t["seed"] = integer<uint64_t>([](RunConfig& c) -> uint64_t& { return c.seed; });
    t["threads"] = integer<int>([](RunConfig& c) -> int& { return c.threads; });

    t["data.source"] = {[](RunConfig& c, const std::string& v) {
                          if (v == "synth") c.data.source = DataSource::synth;
                          else if (v == "kitti") c.data.source = DataSource::kitti;
                          else return false;
                          return true;
                        },
                        [](RunConfig& c) { return to_string(c.data.source); }};
    t["data.scene"] = path([](RunConfig& c) -> std::filesystem::path& { return c.data.scene; });
    t["data.scans"] = integer<int>([](RunConfig& c) -> int& { return c.data.scans; });
    t["data.rays_per_scan"] = integer<int>([](RunConfig& c) -> int& { return c.data.rays_per_scan; });
    t["data.sequence"] = path([](RunConfig& c) -> std::filesystem::path& { return c.data.sequence; });
    t["data.first_scan"] = integer<int>([](RunConfig& c) -> int& { return c.data.first_scan; });
    t["data.last_scan"] = integer<int>([](RunConfig& c) -> int& { return c.data.last_scan; });
    t["data.stride"] = integer<int>([](RunConfig& c) -> int& { return c.data.stride; });
    t["data.palette"] = path([](RunConfig& c) -> std::filesystem::path& { return c.data.palette; });
    t["data.q_max"] = integer<size_t>([](RunConfig& c) -> size_t& { return c.data.q_max; });
    t["data.submap_frame"] = boolean([](RunConfig& c) -> bool& { return c.data.submap_frame; });

    t["grid.leaf_size"] = real([](RunConfig& c) -> double& { return c.grid.leaf_size; });
    t["grid.levels"] = integer<int>([](RunConfig& c) -> int& { return c.grid.levels; });
    t["grid.geo_dim"] = integer<int>([](RunConfig& c) -> int& { return c.grid.geo_dim; });
    t["grid.sem_dim"] = integer<int>([](RunConfig& c) -> int& { return c.grid.sem_dim; });
    t["grid.init_std"] = real([](RunConfig& c) -> double& { return c.grid.init_std; });
    t["grid.level_merge"] = {[](RunConfig& c, const std::string& v) {
                               if (v == "concat") c.grid.merge = LevelMerge::concat;
                               else if (v == "sum") c.grid.merge = LevelMerge::sum;
                               else return false;
                               return true;
                             },
                             [](RunConfig& c) {
                               return std::string(c.grid.merge == LevelMerge::concat ? "concat" : "sum");
                             }};
    t["decoder.hidden_width"] = integer<int>([](RunConfig& c) -> int& { return c.decoder.hidden_width; });
    t["decoder.hidden_layers"] = integer<int>([](RunConfig& c) -> int& { return c.decoder.hidden_layers; });

    t["train.batch_steps"] = integer<int>([](RunConfig& c) -> int& { return c.train.batch_steps; });
    t["train.steps_per_scan"] = integer<int>([](RunConfig& c) -> int& { return c.train.steps_per_scan; });
    t["train.rays_per_step"] = integer<size_t>([](RunConfig& c) -> size_t& { return c.train.rays_per_step; });
    t["train.samples_per_ray"] = integer<int>([](RunConfig& c) -> int& { return c.train.sampler.samples_per_ray; });
    t["train.band_width"] = real([](RunConfig& c) -> double& { return c.train.sampler.band_width; });
    t["train.min_range"] = real([](RunConfig& c) -> double& { return c.train.sampler.min_range; });
    t["train.feature_lr"] = real([](RunConfig& c) -> double& { return c.train.feature_adam.lr; });
    t["train.decoder_lr"] = real([](RunConfig& c) -> double& { return c.train.decoder_adam.lr; });
    t["train.sigma"] = real([](RunConfig& c) -> double& { return c.train.sigma; });

    t["loss.lambda2"] = real([](RunConfig& c) -> double& { return c.train.weights.lambda2; });
    t["loss.lambda3"] = real([](RunConfig& c) -> double& { return c.train.weights.lambda3; });
    t["loss.lambda4"] = real([](RunConfig& c) -> double& { return c.train.weights.lambda4; });
    t["loss.lambda5"] = real([](RunConfig& c) -> double& { return c.train.weights.lambda5; });
    t["loss.alpha"] = real([](RunConfig& c) -> double& { return c.train.weights.alpha; });
    t["loss.beta_max"] = real([](RunConfig& c) -> double& { return c.train.weights.beta_max; });

    t["dynamic.classes"] = {[](RunConfig& c, const std::string& v) {
                              c.dynamic_classes.clear();
                              for (const auto& tok : split_list(v)) {
                                int id;
                                if (!parse_int(tok, id)) return false;
                                c.dynamic_classes.insert(id);
                              }
                              return true;
                            },
                            [](RunConfig& c) {
                              std::string s;
                              for (int id : c.dynamic_classes) s += (s.empty() ? "" : ",") + std::to_string(id);
                              return s;
                            }};
    t["dynamic.filter"] = {[](RunConfig& c, const std::string& v) {
                             if (v == "off") c.dynamic_filter = DynamicFilter::off;
                             else if (v == "training") c.dynamic_filter = DynamicFilter::training;
                             else if (v == "posthoc") c.dynamic_filter = DynamicFilter::posthoc;
                             else if (v == "both") c.dynamic_filter = DynamicFilter::both;
                             else return false;
                             return true;
                           },
                           [](RunConfig& c) { return to_string(c.dynamic_filter); }};

    t["mesh.s_cube"] = real([](RunConfig& c) -> double& { return c.s_cube; });
    t["eval.tau"] = {[](RunConfig& c, const std::string& v) {
                       c.taus.clear();
                       for (const auto& tok : split_list(v)) {
                         double x;
                         if (!parse_real(tok, x)) return false;
                         c.taus.push_back(x);
                       }
                       return !c.taus.empty();
                     },
                     [](RunConfig& c) {
                       std::string s;
                       for (double x : c.taus) s += (s.empty() ? "" : ",") + num(x);
                       return s;
                     }};
    t["eval.points"] = integer<size_t>([](RunConfig& c) -> size_t& { return c.eval_points; });
    return t;
  }();
  return t;
}

}  // namespace

std::string to_string(DataSource s) { return s == DataSource::synth ? "synth" : "kitti"; }

std::string to_string(DynamicFilter f) {
  switch (f) {
    case DynamicFilter::off: return "off";
    case DynamicFilter::training: return "training";
    case DynamicFilter::posthoc: return "posthoc";
    case DynamicFilter::both: return "both";
  }
  return "off";
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : table()) out.push_back(name);
    return out;
  }();
  return k;
}

RunConfig RunConfig::parse(const std::string& text, const std::optional<MapMode>& mode_override,
                           const std::filesystem::path& base_dir) {
  std::vector<std::string> errors;
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(n) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!table().count(key)) {
      errors.push_back("line " + std::to_string(n) + ": unknown key '" + key + "'");
      continue;
    }
    if (!seen.insert(key).second) {
      errors.push_back("line " + std::to_string(n) + ": duplicate key '" + key + "'");
      continue;
    }
    entries.emplace_back(key, value);
  }

  RunConfig cfg;
  // Mode first: it selects the weight defaults the remaining keys override.
  for (const auto& [k, v] : entries) {
    if (k == "mode" && !table().at(k).set(cfg, v)) errors.push_back("mode: unknown mode '" + v + "'");
  }
  if (mode_override) cfg.mode = *mode_override;
  cfg.train.mode = cfg.mode;
  cfg.train.weights = LossWeights::defaults_for(cfg.mode);
  for (const auto& [k, v] : entries) {
    if (k == "mode") continue;
    if (!table().at(k).set(cfg, v)) errors.push_back(k + ": invalid value '" + v + "'");
  }
  cfg.train.seed = cfg.seed;
  cfg.grid.seed = cfg.seed;

  if (cfg.mode == MapMode::incremental_panoptic) {
    for (const char* k : {"loss.lambda3", "loss.lambda5"}) {
      if (!seen.count(k)) errors.push_back(std::string(k) + ": required in mode incremental-panoptic");
    }
  }
  try {
    cfg.train.weights.validate(cfg.mode);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (cfg.threads < 1) errors.push_back("threads: must be >= 1");
  if (!(cfg.grid.leaf_size > 0.0)) errors.push_back("grid.leaf_size: must be positive");
  if (cfg.grid.levels < 1 || cfg.grid.levels > 8) errors.push_back("grid.levels: must be in [1, 8]");
  if (cfg.grid.geo_dim < 1 || cfg.grid.sem_dim < 1) errors.push_back("grid: feature dims must be positive");
  if (cfg.grid.merge == LevelMerge::sum && is_panoptic(cfg.mode) && cfg.grid.sem_dim < 2) {
    errors.push_back("grid.sem_dim: panoptic split needs at least 2 coordinates");
  }
  if (cfg.decoder.hidden_width < 1 || cfg.decoder.hidden_layers < 0) errors.push_back("decoder: invalid shape");
  if (cfg.train.batch_steps < 0 || cfg.train.steps_per_scan < 0) errors.push_back("train: step counts must be >= 0");
  if (cfg.train.rays_per_step == 0) errors.push_back("train.rays_per_step: must be positive");
  if (cfg.train.sampler.samples_per_ray < 2 || cfg.train.sampler.samples_per_ray % 2) {
    errors.push_back("train.samples_per_ray: must be even and >= 2");
  }
  if (!(cfg.train.sampler.band_width > 0.0)) errors.push_back("train.band_width: must be positive");
  if (cfg.train.sampler.min_range < 0.0) errors.push_back("train.min_range: must be >= 0");
  if (!(cfg.train.feature_adam.lr > 0.0) || !(cfg.train.decoder_adam.lr > 0.0)) {
    errors.push_back("train: learning rates must be positive");
  }
  if (is_panoptic(cfg.mode) && !(cfg.train.sigma > 0.0 && cfg.train.sigma < 1.0)) {
    errors.push_back("train.sigma: must be in (0, 1)");
  }
  if (!(cfg.s_cube > 0.0)) errors.push_back("mesh.s_cube: must be positive");
  for (double t : cfg.taus) {
    if (!(t > 0.0)) errors.push_back("eval.tau: thresholds must be positive");
  }
  if (cfg.eval_points == 0) errors.push_back("eval.points: must be positive");
  if (cfg.data.q_max < 1) errors.push_back("data.q_max: must be >= 1");
  if (cfg.data.stride < 1) errors.push_back("data.stride: must be >= 1");
  if (cfg.data.first_scan < 0) errors.push_back("data.first_scan: must be >= 0");
  if (cfg.data.last_scan >= 0 && cfg.data.last_scan < cfg.data.first_scan) {
    errors.push_back("data.last_scan: precedes data.first_scan");
  }
  if (cfg.data.source == DataSource::synth) {
    if (cfg.data.scene.empty()) errors.push_back("data.scene: required for data.source = synth");
    if (cfg.data.scans < 1 || cfg.data.rays_per_scan < 1) errors.push_back("data: synthetic ray budget must be positive");
  } else if (cfg.data.sequence.empty()) {
    errors.push_back("data.sequence: required for data.source = kitti");
  }
  for (int c : cfg.dynamic_classes) {
    if (c <= 0) errors.push_back("dynamic.classes: class ids must be positive");
  }

  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }

  const std::filesystem::path root = data_root(base_dir);
  for (auto* p : {&cfg.data.scene, &cfg.data.sequence, &cfg.data.palette}) {
    if (!p->empty() && p->is_relative()) *p = root / *p;
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path, const std::optional<MapMode>& mode_override) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), mode_override, path.parent_path());
}

std::string RunConfig::dump() const {
  RunConfig copy = *this;
  std::string out;
  for (const auto& [k, f] : table()) out += k + " = " + f.get(copy) + "\n";
  return out;
}

std::filesystem::path data_root(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("SEMAP_DATA_ROOT"); env && *env) return env;
  return fallback;
}

}  // namespace semap
