#include <array>
#include <cstdio>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include <doctest.h>

#include "dfkoop/io.hpp"

namespace fs = std::filesystem;
using dfkoop::read_text;
using dfkoop::write_text;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

/// Runs the command-line tool with stderr folded into the captured output.
Result run(const std::string& args) {
  const std::string cmd = std::string("\"") + DFKOOP_CLI + "\" " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) {
    r.out += buf.data();
  }
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dfkoop_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kConfig = R"({
  "system": "duffing",
  "ts": 0.02,
  "dataset": { "n_long": 4, "split": 2, "horizon": 10, "siblings": 1, "hold_steps": 5,
               "channels": { "levels": [5] }, "seed": 3 },
  "learn": { "n_z": 4, "iters": 40, "v_freeze_iters": 10, "adam": { "alpha": 0.01 }, "seed": 2 },
  "edmd": { "n_z": 6 },
  "mpc": {
    "horizon": 8,
    "Q": [15, 0.1],
    "R": [0.01],
    "R_d": [0.01],
    "R_units": "original",
    "y_bounds": { "lo": [-1, -1], "hi": [1, 1] },
    "v_bounds": "auto",
    "zeta": 1.0,
    "knn": { "mode": "static", "k": 1 },
    "x_init": [0, 0],
    "schedule": [ { "ref": [0.3, 0], "steps": 5 }, { "ref": [-0.2, 0], "steps": 5 } ]
  },
  "eval": { "horizon": 15, "initial_states": [[0.2, 0.0]], "input": "random", "seed": 4 }
})";

std::string p(const fs::path& path) { return "\"" + path.string() + "\""; }

}  // namespace

TEST_CASE("pipeline runs end to end and reproduces its outputs byte for byte") {
  const fs::path dir = workdir("pipeline");
  const fs::path cfg = dir / "config.json";
  write_text(cfg, kConfig);

  for (const char* tag : {"a", "b"}) {
    const fs::path d = dir / tag;
    Result r = run("gen --config " + p(cfg) + " --out " + p(d / "data"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("train --config " + p(cfg) + " --dataset " + p(d / "data") + " --out " + p(d / "learned"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(r.out.find("loss") != std::string::npos);
    r = run("train --edmd --config " + p(cfg) + " --dataset " + p(d / "data") + " --out " + p(d / "edmd"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("eval --predictor " + p(d / "learned" / "predictor.json") + " --config " + p(cfg) + " --out " +
            p(d / "eval"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(r.out.find("rmse") != std::string::npos);
    r = run("eval --predictor " + p(d / "learned" / "predictor.json") + " --dataset " + p(d / "data") +
            " --horizon 20 --out " + p(d / "eval_ds"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("mpc --config " + p(cfg) + " --predictor " + p(d / "learned" / "predictor.json") + " --out " +
            p(d / "mpc"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    CHECK(r.out.find("terminal_err") != std::string::npos);
  }
  for (const char* file : {"data/meta.json", "data/trajectories.csv", "learned/predictor.json",
                           "learned/loss_history.csv", "learned/psi.csv", "learned/phi_samples.csv",
                           "edmd/predictor.json", "eval/openloop.csv", "eval_ds/openloop.csv", "mpc/run.csv"}) {
    INFO(file);
    REQUIRE(fs::exists(dir / "a" / file));
    CHECK(read_text(dir / "a" / file) == read_text(dir / "b" / file));
  }

  // A different seed changes the dataset.
  const Result r = run("gen --config " + p(cfg) + " --seed-override 99 --out " + p(dir / "c"));
  REQUIRE(r.code == 0);
  CHECK(read_text(dir / "c" / "trajectories.csv") != read_text(dir / "a" / "data" / "trajectories.csv"));

  SUBCASE("compare of identical runs reports zero differences") {
    const std::string run_a = p(dir / "a" / "mpc" / "run.csv");
    const Result c = run("compare " + run_a + " " + p(dir / "b" / "mpc" / "run.csv") + " --config " + p(cfg));
    REQUIRE_MESSAGE(c.code == 0, c.out);
    CHECK(c.out.find("segment 1: cost 0, terminal_err 0") != std::string::npos);
    CHECK(c.out.find("segment 2: cost 0, terminal_err 0") != std::string::npos);
    CHECK(c.out.find("total cost 0\n") != std::string::npos);
  }

  SUBCASE("compare rejects runs with different schedules") {
    const std::string other = std::string(kConfig).replace(std::string(kConfig).find("\"steps\": 5 } ]"), 14,
                                                           "\"steps\": 6 } ]");
    const fs::path cfg2 = dir / "config2.json";
    write_text(cfg2, other);
    Result m = run("mpc --config " + p(cfg2) + " --predictor " + p(dir / "a" / "learned" / "predictor.json") +
                   " --out " + p(dir / "mpc2"));
    REQUIRE_MESSAGE(m.code == 0, m.out);
    const Result c = run("compare " + p(dir / "a" / "mpc" / "run.csv") + " " + p(dir / "mpc2" / "run.csv"));
    CHECK(c.code == 2);
  }

  SUBCASE("compare can run two predictors itself") {
    const Result c = run("compare --config " + p(cfg) + " --predictor " + p(dir / "a" / "learned" / "predictor.json") +
                         " --predictor " + p(dir / "a" / "edmd" / "predictor.json"));
    REQUIRE_MESSAGE(c.code == 0, c.out);
    CHECK(c.out.find("difference") != std::string::npos);
  }
}

TEST_CASE("exit codes") {
  const fs::path dir = workdir("codes");
  const fs::path cfg = dir / "config.json";
  write_text(cfg, kConfig);

  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("gen --out " + p(dir / "x")).code == 2);
  CHECK(run("gen --config " + p(dir / "none.json") + " --out " + p(dir / "x")).code == 2);

  const fs::path bad = dir / "bad.json";
  write_text(bad, std::string(kConfig).replace(std::string(kConfig).find("\"Q\": [15, 0.1]"), 14, "\"Q\": [15]"));
  const Result r = run("gen --config " + p(bad) + " --out " + p(dir / "x"));
  CHECK(r.code == 2);
  CHECK(r.out.find("mpc.Q") != std::string::npos);

  CHECK(run("mpc --config " + p(cfg) + " --predictor " + p(dir / "missing.json") + " --out " + p(dir / "m")).code ==
        4);
  CHECK(run("train --config " + p(cfg) + " --dataset " + p(dir / "nowhere") + " --out " + p(dir / "t")).code == 4);

  const fs::path wild = dir / "wild.json";
  write_text(wild, std::string(kConfig).replace(std::string(kConfig).find("\"alpha\": 0.01"), 13, "\"alpha\": 1e30"));
  REQUIRE(run("gen --config " + p(wild) + " --out " + p(dir / "data")).code == 0);
  const Result t = run("train --config " + p(wild) + " --dataset " + p(dir / "data") + " --out " + p(dir / "t"));
  CHECK(t.code == 3);
  CHECK(fs::exists(dir / "t" / "loss_history.csv"));
}
