#include "run_manifest.hpp"

#include <fstream>
#include <json.hpp>

#include "semap/error.hpp"

namespace semap::cli {

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

void RunManifest::set_config(const std::filesystem::path& path, const std::string& resolved_dump) {
  config_path_ = path.empty() ? std::string{} : std::filesystem::absolute(path).string();
  config_dump_ = resolved_dump;
}

void RunManifest::set_seed(uint64_t seed, int threads) {
  seed_ = seed;
  threads_ = threads;
  has_seed_ = true;
}

void RunManifest::add_input(const std::string& role, const std::filesystem::path& path) {
  inputs_.emplace_back(role, std::filesystem::absolute(path).string());
}

void RunManifest::add_output(const std::string& role, const std::filesystem::path& path) {
  outputs_.emplace_back(role, std::filesystem::absolute(path).string());
}

void RunManifest::add_value(const std::string& key, const std::string& value) { values_.emplace_back(key, value); }

RunManifest::Stage::Stage(RunManifest& m, std::string name)
    : m_(m), name_(std::move(name)), t0_(std::chrono::steady_clock::now()) {}

RunManifest::Stage::~Stage() {
  m_.stages_.emplace_back(name_, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count());
}

void RunManifest::write(const std::filesystem::path& dir, int exit_code, const std::string& error) const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["command"] = command_;
  j["argv"] = argv_;
  j["config_path"] = config_path_;
  j["config"] = config_dump_;
  if (has_seed_) {
    j["seed"] = seed_;
    j["threads"] = threads_;
  }
  auto pairs = [](const std::vector<std::pair<std::string, std::string>>& v) {
    ordered_json o = ordered_json::object();
    for (const auto& [k, x] : v) o[k] = x;
    return o;
  };
  j["inputs"] = pairs(inputs_);
  j["outputs"] = pairs(outputs_);
  j["values"] = pairs(values_);
  ordered_json t = ordered_json::object();
  for (const auto& [k, s] : stages_) t[k] = s;
  t["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  j["timing_seconds"] = t;
  j["exit_code"] = exit_code;
  if (!error.empty()) j["error"] = error;

  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "run_manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "run_manifest.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace semap::cli
