#include <doctest.h>

#ifdef SEMAP_CLI_PATH

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "semap/config.hpp"
#include "semap/pipeline.hpp"
#include "semap/ply.hpp"

using namespace semap;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = SEMAP_TEST_FIXTURES;

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = "env -u SEMAP_DATA_ROOT \"" + std::string(SEMAP_CLI_PATH) + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Column `col` of every data row of a CSV file.
std::vector<double> column(const fs::path& csv, const std::string& col) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> names;
  std::stringstream hs(line);
  for (std::string c; std::getline(hs, c, ',');) names.push_back(c);
  const auto idx = static_cast<size_t>(std::find(names.begin(), names.end(), col) - names.begin());
  REQUIRE(idx < names.size());
  std::vector<double> out;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string cell;
    for (size_t i = 0; i <= idx; ++i) std::getline(ls, cell, ',');
    out.push_back(std::stod(cell));
  }
  return out;
}

// Copies a fixture config with an absolute scene path and extra lines appended.
void overlay(const fs::path& base, const std::string& extra, const fs::path& dest) {
  std::istringstream in(slurp(base));
  std::ofstream out(dest);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("data.scene = ", 0) == 0) line = "data.scene = " + (base.parent_path() / line.substr(13)).string();
    out << line << "\n";
  }
  out << extra;
}

struct Workdir {
  fs::path path;
  explicit Workdir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("train, mesh and eval on a small synthetic scene") {
    Workdir w("semap_cli_smoke");
    const fs::path out = w.path / "run", log = w.path / "log.txt";
    const std::string common = "--config " + q(kFixtures / "tiny.cfg") + " --threads 1 --out " + q(out);
    REQUIRE_MESSAGE(run("train " + common, log) == 0, slurp(log));
    for (const char* f : {"model.lnsf", "loss.csv", "config.txt", "run_manifest.json"}) CHECK(fs::exists(out / f));
    CHECK(slurp(out / "run_manifest.json").find("\"exit_code\": 0") != std::string::npos);
    CHECK(column(out / "loss.csv", "step").size() == 150);
    const std::string loss_header = slurp(out / "loss.csv").substr(0, 27);
    CHECK(loss_header == "step,L1,L2,L3,L4,L5,total\n0");

    REQUIRE_MESSAGE(run("mesh " + common, log) == 0, slurp(log));
    const SemanticMesh fine = read_ply(out / "mesh.ply");
    CHECK(fine.triangle_count() > 1000);
    CHECK(fs::exists(out / "mesh.classes.txt"));
    REQUIRE(run("mesh " + common + " --s-cube 0.2 --ply " + q(out / "coarse.ply"), log) == 0);
    const SemanticMesh coarse = read_ply(out / "coarse.ply");
    CHECK(coarse.triangle_count() < fine.triangle_count());

    REQUIRE_MESSAGE(run("eval " + common + " --tau 0.02 0.05 0.1 0.2", log) == 0, slurp(log));
    const auto recall = column(out / "metrics.csv", "recall_pct");
    const auto precision = column(out / "metrics.csv", "precision_pct");
    REQUIRE(recall.size() == 4);
    for (size_t i = 1; i < 4; ++i) {
      CHECK(recall[i] >= recall[i - 1]);
      CHECK(precision[i] >= precision[i - 1]);
    }
    CHECK(recall[3] > 80.0);
    CHECK(fs::exists(out / "classes.csv"));

    // The library path with the same configuration produces the same bytes.
    const RunConfig cfg = RunConfig::load(kFixtures / "tiny.cfg");
    const Dataset data = load_dataset(cfg);
    MapModel model = build_model(cfg, data);
    const TrainResult tr = train_model(cfg, data, model);
    write_loss_csv(w.path / "lib_loss.csv", tr.history);
    model.save(w.path / "lib_model.lnsf");
    CHECK(slurp(w.path / "lib_loss.csv") == slurp(out / "loss.csv"));
    CHECK(slurp(w.path / "lib_model.lnsf") == slurp(out / "model.lnsf"));
  }

  TEST_CASE("exit codes") {
    Workdir w("semap_cli_exit");
    const fs::path log = w.path / "log.txt";
    CHECK(run("train --no-such-flag", log) == 2);
    CHECK(run("train --config " + q(w.path / "missing.cfg") + " --out " + q(w.path), log) == 2);
    std::ofstream(w.path / "bad.cfg") << "data.source = synth\ndata.scene = x\nfoo.bar = 1\n";
    CHECK(run("train --config " + q(w.path / "bad.cfg") + " --out " + q(w.path / "bad"), log) == 2);
    CHECK(slurp(log).find("foo.bar") != std::string::npos);
    CHECK(slurp(w.path / "bad" / "run_manifest.json").find("\"exit_code\": 2") != std::string::npos);
    CHECK(run("mesh --config " + q(kFixtures / "tiny.cfg") + " --checkpoint " + q(w.path / "none.lnsf") +
                  " --out " + q(w.path),
              log) == 3);
    CHECK(run("train --config " + q(kFixtures / "tiny.cfg") + " --mode incremental-panoptic --out " + q(w.path), log) ==
          2);
  }

  TEST_CASE("merge: consistent data aligns, mismatched data exits 4") {
    Workdir w("semap_cli_merge");
    const fs::path log = w.path / "log.txt";
    overlay(kFixtures / "tiny_submap.cfg", "data.last_scan = 3\n", w.path / "a.cfg");
    overlay(kFixtures / "tiny_submap.cfg", "data.first_scan = 2\n", w.path / "b.cfg");
    REQUIRE(run("train --config " + q(w.path / "a.cfg") + " --threads 1 --out " + q(w.path / "a"), log) == 0);
    REQUIRE(run("train --config " + q(w.path / "b.cfg") + " --threads 1 --out " + q(w.path / "b"), log) == 0);

    std::ofstream(w.path / "good.txt") << "data " << (kFixtures / "tiny_submap.cfg").string()
                                       << "\nsubmap a/model.lnsf 0 3\nsubmap b/model.lnsf 2 5\noutput merged.ply\n";
    REQUIRE_MESSAGE(run("merge --manifest " + q(w.path / "good.txt") + " --out " + q(w.path / "m"), log) == 0,
                    slurp(log));
    CHECK(read_ply(w.path / "merged.ply").triangle_count() > 1000);
    CHECK(slurp(w.path / "m" / "run_manifest.json").find("merged") != std::string::npos);

    std::ofstream(w.path / "bad.txt") << "data " << (kFixtures / "tiny_lowered.cfg").string()
                                      << "\nsubmap a/model.lnsf 0 3\nsubmap b/model.lnsf 2 5\noutput bad.ply\n";
    CHECK(run("merge --manifest " + q(w.path / "bad.txt") + " --out " + q(w.path / "mb"), log) == 4);
    CHECK_FALSE(fs::exists(w.path / "bad.ply"));
  }

  TEST_CASE("synth writes a sequence the kitti reader trains on") {
    Workdir w("semap_cli_synth");
    const fs::path log = w.path / "log.txt", seq = w.path / "seq";
    REQUIRE_MESSAGE(run("synth --scene " + q(kFixtures / "tiny.scene") + " --scans 2 --rays 800 --truth-points 5000 --out " +
                            q(seq),
                        log) == 0,
                    slurp(log));
    for (const char* f : {"velodyne/000000.bin", "labels/000001.label", "poses.txt", "calib.txt", "truth.ply"}) {
      CHECK(fs::exists(seq / f));
    }
    std::ofstream(w.path / "k.cfg") << "data.source = kitti\ndata.sequence = " << seq.string()
                                    << "\ntrain.batch_steps = 10\ntrain.rays_per_step = 128\n";
    REQUIRE_MESSAGE(run("train --config " + q(w.path / "k.cfg") + " --out " + q(w.path / "t"), log) == 0, slurp(log));
    CHECK(column(w.path / "t" / "loss.csv", "total").size() == 10);
  }
}

#endif
