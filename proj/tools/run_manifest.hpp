#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace semap::cli {

/// Record of one command invocation, written as run_manifest.json next to its outputs.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(const std::filesystem::path& path, const std::string& resolved_dump);
  void set_seed(uint64_t seed, int threads);
  void add_input(const std::string& role, const std::filesystem::path& path);
  void add_output(const std::string& role, const std::filesystem::path& path);
  void add_value(const std::string& key, const std::string& value);

  /// Times the stage from construction of the guard to its destruction.
  class Stage {
   public:
    Stage(RunManifest& m, std::string name);
    ~Stage();
    Stage(const Stage&) = delete;
    Stage& operator=(const Stage&) = delete;

   private:
    RunManifest& m_;
    std::string name_;
    std::chrono::steady_clock::time_point t0_;
  };

  /// Writes <dir>/run_manifest.json with the exit status.
  void write(const std::filesystem::path& dir, int exit_code, const std::string& error = {}) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string config_path_;
  std::string config_dump_;
  uint64_t seed_ = 0;
  int threads_ = 1;
  bool has_seed_ = false;
  std::vector<std::pair<std::string, std::string>> inputs_, outputs_, values_;
  std::vector<std::pair<std::string, double>> stages_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace semap::cli
