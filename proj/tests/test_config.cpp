#include <cmath>
#include <string>

#include <doctest.h>

#include "dfkoop/config.hpp"
#include "dfkoop/error.hpp"
#include "dfkoop/evaluate.hpp"
#include "dfkoop/summary.hpp"
#include "dfkoop/systems.hpp"

using namespace dfkoop;

namespace {

const std::string kBase = R"({
  "system": "duffing",
  "ts": 0.02,
  "dataset": { "n_long": 2, "split": 2, "horizon": 5, "channels": { "levels": [5] }, "seed": 3 },
  "learn": { "n_z": 4, "iters": 10, "adam": { "alpha": 0.01 } },
  "edmd": { "n_z": 6 },
  "mpc": {
    "horizon": 10,
    "Q": [15, 0.1],
    "R": [0.01],
    "R_d": [[0.02]],
    "R_units": "original",
    "y_bounds": { "lo": [-1, null], "hi": [1, null] },
    "v_bounds": "auto",
    "dv_bounds": null,
    "zeta": 1.0,
    "x_init": [0, 0],
    "schedule": [ { "ref": [0.5, 0], "steps": 3 } ]
  },
  "eval": { "horizon": 4, "initial_states": [[0.1, 0.2]], "input": "random", "seed": 9 }
})";

std::string with(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

std::string error_of(const std::string& text) {
  try {
    (void)parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

RunRow row(int step, double x, double ref, double cost) {
  RunRow r;
  r.step = step;
  r.t = 0.5 * step;
  r.x = Vec::Constant(1, x);
  r.y_ref = Vec::Constant(1, ref);
  r.u = Vec::Zero(1);
  r.v = Vec::Zero(1);
  r.stage_cost = cost;
  r.solve_ms = step;
  return r;
}

}  // namespace

TEST_CASE("config parses all sections") {
  const ExperimentConfig cfg = parse_config(kBase);
  CHECK(cfg.system == "duffing");
  CHECK(cfg.ts == 0.02);
  CHECK(cfg.dataset.n_long == 2);
  CHECK(cfg.dataset.seed == 3);
  CHECK(cfg.channels.build().size() == 1);
  CHECK(cfg.channels.build()[0].levels().size() == 5);
  CHECK(cfg.learn.n_z == 4);
  CHECK(cfg.learn.v_freeze_iters == 10);
  CHECK(cfg.learn.adam.alpha == 0.01);
  CHECK(cfg.edmd.n_z == 6);
  REQUIRE(cfg.mpc.has_value());
  const MpcSpec& m = *cfg.mpc;
  CHECK(m.base.horizon == 10);
  CHECK(m.base.q(0, 0) == 15.0);
  CHECK(m.base.q(1, 1) == 0.1);
  CHECK(m.base.q(0, 1) == 0.0);
  CHECK(m.base.r_d(0, 0) == 0.02);
  CHECK(m.r_units == WeightUnits::Original);
  CHECK(m.v_bounds_auto);
  CHECK(m.base.y_hi(0) == 1.0);
  CHECK(std::isinf(m.base.y_hi(1)));
  CHECK(std::isinf(m.base.y_lo(1)));
  CHECK(m.base.y_lo(1) < 0.0);
  CHECK(m.base.dv_lo.size() == 0);
  REQUIRE(m.base.zeta.has_value());
  CHECK(*m.base.zeta == 1.0);
  REQUIRE(m.schedule.size() == 1);
  CHECK(m.schedule[0].steps == 3);
  CHECK(cfg.eval.input == EvalInput::Random);
  CHECK(cfg.eval.seed == 9);

  ExperimentConfig o = cfg;
  o.override_seed(42);
  CHECK(o.dataset.seed == 42);
  CHECK(o.learn.seed == 42);
  CHECK(o.edmd.seed == 42);
  CHECK(o.eval.seed == 42);
}

TEST_CASE("config allows comments") {
  CHECK_NOTHROW(parse_config("// leading comment\n" + kBase));
}

TEST_CASE("config errors name the offending key") {
  CHECK(error_of(with(kBase, "\"Q\": [15, 0.1]", "\"Q\": [15, 0.1, 1]")).find("mpc.Q") != std::string::npos);
  CHECK(error_of(with(kBase, "\"duffing\"", "\"pendulum\"")).find("system") != std::string::npos);
  CHECK(error_of(with(kBase, "\"alpha\": 0.01", "\"alpha\": \"big\"")).find("learn.adam.alpha") !=
        std::string::npos);
  CHECK(error_of(with(kBase, "\"n_z\": 6", "\"n_z\": 6, \"extra\": 1")).find("edmd.extra") != std::string::npos);
  CHECK(error_of(with(kBase, "\"levels\": [5]", "\"levels\": [5, 5]")).find("dataset.channels") !=
        std::string::npos);
  CHECK(error_of(with(kBase, "\"x_init\": [0, 0]", "\"x_init\": [0]")).find("mpc.x_init") != std::string::npos);
  CHECK(error_of(with(kBase, "\"ref\": [0.5, 0]", "\"ref\": [0.5]")).find("mpc.schedule") != std::string::npos);
  CHECK(error_of(with(kBase, "\"steps\": 3", "\"steps\": -1")).find("steps") != std::string::npos);
  CHECK(error_of(with(kBase, "[[0.1, 0.2]]", "[[0.1]]")).find("eval.initial_states") != std::string::npos);
  CHECK(error_of(with(kBase, "\"input\": \"random\"", "\"input\": \"noise\"")).find("eval.input") !=
        std::string::npos);
  CHECK(error_of(with(kBase, "\"horizon\": 10", "\"horizon\": 0")).find("mpc.horizon") != std::string::npos);
  CHECK(error_of(with(kBase, "\"split\": 2", "\"split\": 2.5")).find("dataset.split") != std::string::npos);
  CHECK(error_of("{ not json").find("not valid JSON") != std::string::npos);
  CHECK(error_of(with(kBase, "\"seed\": 3", "\"seed\": -3")).find("dataset.seed") != std::string::npos);
}

TEST_CASE("symmetry block sizes must add up to the lifted dimension") {
  const std::string sym = R"({
    "system": "symdemo",
    "dataset": { "n_long": 2, "split": 1, "horizon": 3, "channels": { "levels": [3, 3, 3] } },
    "learn": { "n_z": 4, "iters": 5, "symmetry": {
      "gamma_x": [[1, -1, -1, 1], [1, 1, 1, -1]], "gamma_u": [[1, -1, -1], [1, 1, 1]],
      "block_sizes": [1, 1, 1, 1] } }
  })";
  const ExperimentConfig cfg = parse_config(sym);
  const auto s = cfg.structure();
  REQUIRE(s.has_value());
  CHECK(s->order() == 4);
  CHECK(error_of(with(sym, "[1, 1, 1, 1]", "[1, 2, 1, 1]")).find("learn.symmetry.block_sizes") !=
        std::string::npos);
  CHECK(error_of(with(sym, "[[1, -1, -1], [1, 1, 1]]", "[[1, -1, -1]]")).find("learn.symmetry") !=
        std::string::npos);
}

TEST_CASE("mpc settings resolve against a predictor") {
  const ExperimentConfig cfg = parse_config(kBase);
  KoopmanPredictor p;
  p.a = Mat::Identity(4, 4);
  p.b = Mat::Zero(4, 1);
  p.c = Mat::Zero(2, 4);
  p.u_channels = cfg.channels.build();
  p.v_channels = {LiftedChannel{{-0.2, -0.1, 0.0, 0.1, 0.2}}};
  const MpcConfig m = cfg.mpc->resolve(p);
  // Half-range 0.2: weights grow by 1 / 0.04.
  CHECK(m.r(0, 0) == doctest::Approx(0.01 / 0.04));
  CHECK(m.r_d(0, 0) == doctest::Approx(0.02 / 0.04));
  CHECK(m.v_lo(0) == -0.2);
  CHECK(m.v_hi(0) == 0.2);
}

TEST_CASE("run summary segments, costs and settling") {
  RunLog log;
  // Segment 1 (ref 1): error 1, 0.5, 0.04, 0.2, 0.01, 0.0 settles at the fifth row.
  const double xs1[] = {0.0, 0.5, 0.96, 0.8, 0.99, 1.0};
  int k = 0;
  for (double x : xs1) {
    log.rows.push_back(row(k++, x, 1.0, 2.0));
  }
  // Segment 2 (ref 0): never within 0.05.
  for (double x : {0.9, 0.7, 0.3}) {
    log.rows.push_back(row(k++, x, 0.0, 1.0));
  }
  const RunSummary s = summarize_run(log);
  REQUIRE(s.segments.size() == 2);
  CHECK(s.segments[0].first_step == 0);
  CHECK(s.segments[0].steps == 6);
  CHECK(s.segments[0].tracking_cost == 12.0);
  CHECK(s.segments[0].terminal_error == 0.0);
  CHECK(s.segments[0].settle_time == doctest::Approx(2.0));
  CHECK(s.segments[1].first_step == 6);
  CHECK(s.segments[1].steps == 3);
  CHECK(s.segments[1].terminal_error == doctest::Approx(0.3));
  CHECK(s.segments[1].settle_time < 0.0);
  CHECK(s.total_cost == 15.0);
  CHECK(s.solve_time.max_ms == 8.0);
  CHECK(s.solve_time.median_ms == 4.0);
  CHECK(s.solve_time.mean_ms == doctest::Approx(4.0));

  RunLog other = log;
  CHECK_NOTHROW(check_same_schedule(log, other));
  other.rows[7].y_ref(0) = 0.5;
  CHECK_THROWS_AS(check_same_schedule(log, other), ConfigError);
  other = log;
  other.rows.pop_back();
  CHECK_THROWS_AS(check_same_schedule(log, other), ConfigError);
}

TEST_CASE("open-loop rmse") {
  OpenLoopCase a;
  a.y_true = {Vec::Constant(2, 0.0), Vec::Constant(2, 1.0)};
  a.y_pred = {Vec::Constant(2, 0.0), Vec::Constant(2, 3.0)};
  OpenLoopCase b;
  b.y_true = {Vec::Constant(2, 0.0), Vec::Constant(2, 0.0)};
  b.y_pred = {Vec::Constant(2, 1.0), Vec::Constant(2, 1.0)};
  const std::vector<OpenLoopCase> cases = {a, b};
  const Vec r = output_rmse(cases);
  // Squared errors 0, 4, 1, 1 on each output.
  CHECK(r(0) == doctest::Approx(std::sqrt(6.0 / 4.0)));
  CHECK(r(1) == doctest::Approx(std::sqrt(6.0 / 4.0)));
}

TEST_CASE("open-loop evaluation against the simulated system") {
  // An exact linear model of the scalar map x+ = 0.5 x + u.
  SystemDef sys;
  sys.name = "half";
  sys.n_x = 1;
  sys.n_u = 1;
  sys.n_y = 1;
  sys.kind = TimeKind::Discrete;
  sys.rhs = [](const Vec& x, const Vec& u) { return Vec(0.5 * x + u); };
  sys.output = [](const Vec& x) { return x; };
  sys.ts = 1.0;
  sys.state_bounds = {{-10.0, 10.0}};
  sys.input_bounds = {{-1.0, 1.0}};
  KoopmanPredictor p;
  p.a = Mat::Constant(1, 1, 0.5);
  p.b = Mat::Constant(1, 1, 1.0);
  p.c = Mat::Constant(1, 1, 1.0);
  for (int i = -100; i <= 100; ++i) {
    const Vec x = Vec::Constant(1, 0.1 * i);
    p.phi_samples.push_back({x, x});
  }
  p.u_channels = make_channels(std::vector<int>{3});
  p.v_channels = {LiftedChannel{{-1.0, 0.0, 1.0}}};
  const std::vector<Vec> x0 = {Vec::Constant(1, 0.3), Vec::Constant(1, -0.7)};
  for (bool random : {false, true}) {
    const auto cases = evaluate_from_states(p, sys, x0, 6, random, 5, 1);
    REQUIRE(cases.size() == 2);
    for (const auto& c : cases) {
      REQUIRE(c.y_true.size() == 7);
      for (std::size_t t = 0; t < c.y_true.size(); ++t) {
        CHECK(std::abs(c.y_true[t](0) - c.y_pred[t](0)) <= 1e-12);
      }
    }
    if (!random) {
      CHECK(cases[0].y_true[6](0) == doctest::Approx(0.3 / 64.0));
    }
  }
}
