#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "semap/config.hpp"
#include "semap/error.hpp"

using namespace semap;
namespace fs = std::filesystem;

namespace {

const std::string kMinimal = "data.source = synth\ndata.scene = a.scene\n";

std::string error_of(const std::string& text, const std::optional<MapMode>& mode = std::nullopt) {
  try {
    RunConfig::parse(text, mode, "/base");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

struct EnvGuard {
  std::string old;
  bool had;
  EnvGuard() {
    const char* v = std::getenv("SEMAP_DATA_ROOT");
    had = v != nullptr;
    if (had) old = v;
  }
  ~EnvGuard() {
    if (had) setenv("SEMAP_DATA_ROOT", old.c_str(), 1);
    else unsetenv("SEMAP_DATA_ROOT");
  }
};

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults and comments") {
    EnvGuard g;
    unsetenv("SEMAP_DATA_ROOT");
    const RunConfig c = RunConfig::parse("# comment\n" + kMinimal + "seed = 7   # trailing\n", std::nullopt, "/base");
    CHECK(c.mode == MapMode::batch_semantic);
    CHECK(c.seed == 7);
    CHECK(c.train.seed == 7);
    CHECK(c.grid.seed == 7);
    CHECK(c.data.scene == fs::path("/base/a.scene"));
    CHECK(c.train.weights.lambda3 == 0.0);
    CHECK(c.train.weights.lambda5 == 0.0);
  }

  TEST_CASE("unknown keys and bad values are all reported at once") {
    const std::string msg = error_of(kMinimal + "grid.leef_size = 0.1\ngrid.levels = x\nmesh.s_cube = -1\n");
    CHECK(msg.find("unknown key 'grid.leef_size'") != std::string::npos);
    CHECK(msg.find("grid.levels: invalid value 'x'") != std::string::npos);
    CHECK(msg.find("mesh.s_cube: must be positive") != std::string::npos);
    CHECK(error_of(kMinimal + "seed = 1\nseed = 2\n").find("duplicate key") != std::string::npos);
    CHECK(error_of(kMinimal + "this line has no equals\n").find("expected 'key = value'") != std::string::npos);
    CHECK(error_of("data.source = synth\n").find("data.scene: required") != std::string::npos);
    CHECK(error_of(kMinimal + "mode = sideways\n").find("unknown mode") != std::string::npos);
  }

  TEST_CASE("mode-dependent weights") {
    CHECK(error_of(kMinimal + "loss.lambda3 = 1\n").find("lambda3") != std::string::npos);
    CHECK(error_of(kMinimal + "mode = batch-semantic\nloss.lambda5 = 1\n").find("lambda5") != std::string::npos);
    const std::string ip = error_of(kMinimal + "mode = incremental-panoptic\n");
    CHECK(ip.find("loss.lambda3: required") != std::string::npos);
    CHECK(ip.find("loss.lambda5: required") != std::string::npos);
    const RunConfig ok =
        RunConfig::parse(kMinimal + "mode = incremental-panoptic\nloss.lambda3 = 2\nloss.lambda5 = 0.5\n", std::nullopt, "/b");
    CHECK(ok.train.weights.lambda3 == 2.0);
    CHECK(ok.train.weights.lambda5 == 0.5);
    const RunConfig inc = RunConfig::parse(kMinimal, MapMode::incremental_semantic, "/b");
    CHECK(inc.mode == MapMode::incremental_semantic);
    CHECK(inc.train.weights.lambda3 > 0.0);
    // The override applies before validation.
    CHECK_FALSE(error_of(kMinimal, MapMode::incremental_panoptic).empty());
  }

  TEST_CASE("dump parses back to the same dump") {
    const RunConfig c = RunConfig::parse(kMinimal + "mode = batch-panoptic\ndynamic.classes = 1,5\neval.tau = 0.05,0.1\n"
                                         "grid.leaf_size = 0.15\n", std::nullopt, "/root");
    const std::string d = c.dump();
    const RunConfig back = RunConfig::parse(d, std::nullopt, "/elsewhere");
    CHECK(back.dump() == d);
    CHECK(back.dynamic_classes == std::set<int>{1, 5});
    CHECK(back.grid.leaf_size == 0.15);
    for (const auto& k : RunConfig::keys()) CHECK(d.find(k + " = ") != std::string::npos);
  }

  TEST_CASE("relative data paths honor SEMAP_DATA_ROOT") {
    EnvGuard g;
    setenv("SEMAP_DATA_ROOT", "/data/root", 1);
    CHECK(RunConfig::parse(kMinimal, std::nullopt, "/base").data.scene == fs::path("/data/root/a.scene"));
    CHECK(RunConfig::parse("data.scene = /abs/x.scene\n", std::nullopt, "/base").data.scene == fs::path("/abs/x.scene"));
    unsetenv("SEMAP_DATA_ROOT");
    const fs::path dir = fs::temp_directory_path() / "semap_cfg_test";
    fs::create_directories(dir);
    std::ofstream(dir / "run.cfg") << kMinimal;
    CHECK(RunConfig::load(dir / "run.cfg").data.scene == dir / "a.scene");
    fs::remove_all(dir);
    CHECK_THROWS_AS(RunConfig::load(dir / "missing.cfg"), ConfigError);
  }
}
