#include "helpers.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(REGMAP_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

/// Synthetic pair, registration and an intensity-only table shared by the cases below.
struct Workspace {
  fs::path dir = testutil::scratch_dir("cli");
  fs::path pair = dir / "pair";
  fs::path reg = dir / "reg";
  fs::path table = dir / "int" / "table.csv";

  Workspace() {
    REQUIRE(run("synth --out " + q(pair) + " --dims 24 --seed 3") == 0);
    REQUIRE(run("register --fixed " + q(pair / "fixed.mhd") + " --moving " + q(pair / "moving.mhd") + " --out " +
                q(reg) + " --iterations 3 --resolutions 2 --members 2") == 0);
    REQUIRE(run("--schema intensity features --fixed " + q(pair / "fixed.mhd") + " --moving " +
                q(pair / "moving.mhd") + " --tb " + q(reg / "tb") + " --truth " + q(pair / "truth") +
                " --stride 4 --out " + q(table)) == 0);
  }
};

const Workspace& workspace() {
  static const Workspace w;
  return w;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and version succeed") {
  CHECK(run("--version") == 0);
  CHECK(run("--help") == 0);
  CHECK(run("train --help") == 0);
}

TEST_CASE("pipeline commands write their outputs") {
  const Workspace& w = workspace();
  for (const char* f : {"fixed.mhd", "moving.mhd", "truth_dx.mhd", "homogeneous.mhd", "run_manifest.json",
                        "run_config.toml"})
    CHECK_MESSAGE(fs::exists(w.pair / f), f);
  CHECK(fs::exists(w.reg / "tb_dz.mhd"));
  CHECK(fs::exists(w.reg / "ensT" / "1"));
  CHECK(fs::exists(w.reg / "ensTL" / "0"));
  CHECK(fs::exists(w.table));

  const fs::path model = w.dir / "int" / "model.bin";
  CHECK(run("--schema intensity train --table " + q(w.table) + " --out " + q(model) + " --trees 5") == 0);
  CHECK(run("predict --model " + q(model) + " --table " + q(w.table) + " --out " + q(w.dir / "pred.csv")) == 0);
  std::ifstream pred(w.dir / "pred.csv");
  std::string header;
  std::getline(pred, header);
  CHECK(header == "pair_id,i,j,k,y,y_hat,class_hat");
  CHECK(run("importance --model " + q(model) + " --table " + q(w.table) + " --out " + q(w.dir / "imp.csv")) == 0);
}

TEST_CASE("full schema features from stored ensembles") {
  const Workspace& w = workspace();
  CHECK(run("features --fixed " + q(w.pair / "fixed.mhd") + " --moving " + q(w.pair / "moving.mhd") + " --tb " +
            q(w.reg / "tb") + " --ens-t " + q(w.reg / "ensT") + " --ens-tl " + q(w.reg / "ensTL") + " --truth " +
            q(w.pair / "truth") + " --stride 6 --out " + q(w.dir / "full" / "table.bin")) == 0);
  CHECK(fs::exists(w.dir / "full" / "table.bin.json"));
}

TEST_CASE("exit code 2 for missing inputs") {
  const Workspace& w = workspace();
  CHECK(run("train --table " + q(w.dir / "absent.csv") + " --out " + q(w.dir / "m.bin")) == 2);
  CHECK(run("register --fixed " + q(w.dir / "absent.mhd") + " --moving " + q(w.pair / "moving.mhd") + " --out " +
            q(w.dir / "r2")) == 2);
  // Registration columns without ensembles.
  CHECK(run("features --fixed " + q(w.pair / "fixed.mhd") + " --moving " + q(w.pair / "moving.mhd") + " --tb " +
            q(w.reg / "tb") + " --truth " + q(w.pair / "truth") + " --out " + q(w.dir / "x.csv")) == 2);
  // No target source.
  CHECK(run("--schema intensity features --fixed " + q(w.pair / "fixed.mhd") + " --moving " +
            q(w.pair / "moving.mhd") + " --tb " + q(w.reg / "tb") + " --out " + q(w.dir / "x.csv")) == 2);
}

TEST_CASE("exit code 3 for schema mismatches") {
  const Workspace& w = workspace();
  CHECK(run("--schema registration train --table " + q(w.table) + " --out " + q(w.dir / "m.bin") + " --trees 2") ==
        3);
  const fs::path model = w.dir / "mind_model.bin";
  REQUIRE(run("--schema single:mind train --table " + q(w.table) + " --out " + q(model) + " --trees 2") == 0);
  // A table lacking the model's columns.
  const fs::path sid_table = w.dir / "sid.csv";
  REQUIRE(run("--schema single:sid features --fixed " + q(w.pair / "fixed.mhd") + " --moving " +
              q(w.pair / "moving.mhd") + " --tb " + q(w.reg / "tb") + " --truth " + q(w.pair / "truth") +
              " --stride 6 --out " + q(sid_table)) == 0);
  CHECK(run("predict --model " + q(model) + " --table " + q(sid_table) + " --out " + q(w.dir / "p.csv")) == 3);
}

TEST_CASE("exit code 4 for invalid configuration") {
  const Workspace& w = workspace();
  CHECK(run("--schema bogus train --table " + q(w.table) + " --out " + q(w.dir / "m.bin")) == 4);
  CHECK(run("--schema intensity train --table " + q(w.table) + " --out " + q(w.dir / "m.bin") + " --trees 0") == 4);
  CHECK(run("--schema intensity train --table " + q(w.table) + " --out " + q(w.dir / "m.bin") + " --mtry lots") == 4);
  CHECK(run("synth --out " + q(w.dir / "s") + " --dims 4") == 4);
  CHECK(run("--threads -1 synth --out " + q(w.dir / "s")) == 4);
  CHECK(run("--config " + q(w.dir / "absent.toml") + " synth --out " + q(w.dir / "s")) == 4);
  CHECK(run("nosuchcommand") == 4);
}

TEST_CASE("manifest rerun reproduces the outputs") {
  const Workspace& w = workspace();
  const fs::path out = w.dir / "rerun";
  const fs::path model = out / "model.bin";
  REQUIRE(run("--schema intensity --seed 11 train --table " + q(w.table) + " --out " + q(model) + " --trees 4") == 0);
  const std::string first = slurp(model);
  const std::string manifest = slurp(out / "run_manifest.json");
  CHECK(manifest.find("\"seed\": 11") != std::string::npos);
  fs::remove(model);
  REQUIRE(run("--config " + q(out / "run_config.toml")) == 0);
  CHECK(slurp(model) == first);
  CHECK(slurp(out / "run_config.toml").find("[train]") != std::string::npos);
  CHECK(slurp(out / "run_manifest.json").find("config_hash") != std::string::npos);
}

}  // TEST_SUITE
