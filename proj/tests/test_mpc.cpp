#include <cmath>
#include <limits>
#include <vector>

#include <doctest.h>

#include "dfkoop/error.hpp"
#include "dfkoop/mpc.hpp"
#include "dfkoop/qp.hpp"
#include "dfkoop/rng.hpp"
#include "mpc_oracle.hpp"
#include "oracles.hpp"

using namespace dfkoop;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SystemDef scalar_plant() {
  SystemDef s;
  s.name = "scalar";
  s.n_x = 1;
  s.n_u = 1;
  s.n_y = 1;
  s.kind = TimeKind::Discrete;
  s.rhs = [](const Vec& x, const Vec& u) { return Vec(0.9 * x + 0.1 * u); };
  s.output = [](const Vec& x) { return x; };
  s.ts = 0.1;
  s.state_bounds = {{-2.0, 2.0}};
  s.input_bounds = {{-1.0, 1.0}};
  return s;
}

/// Exact linear model of scalar_plant; the identity lifting is reproduced
/// exactly by two-neighbour interpolation on a grid.
KoopmanPredictor scalar_model() {
  KoopmanPredictor p;
  p.a = Mat::Constant(1, 1, 0.9);
  p.b = Mat::Constant(1, 1, 0.1);
  p.c = Mat::Constant(1, 1, 1.0);
  for (int i = -20; i <= 20; ++i) {
    const Vec x = Vec::Constant(1, 0.1 * i);
    p.phi_samples.push_back({x, x});
  }
  std::vector<double> levels;
  for (int i = -10; i <= 10; ++i) {
    levels.push_back(0.1 * i);
  }
  p.u_channels = make_channels(std::vector<std::vector<double>>{levels});
  p.v_channels = {LiftedChannel{levels}};
  p.ts = 0.1;
  return p;
}

MpcConfig scalar_config() {
  MpcConfig cfg;
  cfg.horizon = 10;
  cfg.q = Mat::Identity(1, 1);
  cfg.r = Mat::Constant(1, 1, 1e-4);
  cfg.r_d = Mat::Constant(1, 1, 1e-4);
  cfg.knn_k = 2;
  return cfg;
}

}  // namespace

TEST_CASE("condensed prediction matches the rollout") {
  CHECK(oracle::condensation_sweep(11, 200) <= 1e-10);
}

TEST_CASE("condensed objective equals the stage cost sum up to a constant") {
  CounterRng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int nz = 3;
    const int nu = 2;
    const int ny = 2;
    const int h = 4;
    const KoopmanPredictor p = oracle::random_model(rng, nz, nu, ny);
    const MpcConfig cfg = oracle::base_config(rng, h, nu, ny);
    const CondensedMpc cond = condense(p.a, p.b, p.c, cfg);
    const Vec z0 = oracle::random_vec(rng, nz);
    const Vec v_prev = oracle::random_vec(rng, nu);
    const Vec y_ref = oracle::random_vec(rng, h * ny);
    const Vec q = cond.q_vec(z0, v_prev, y_ref);

    const auto explicit_cost = [&](const Vec& v) {
      std::vector<Vec> vs;
      for (int t = 0; t < h; ++t) {
        vs.push_back(v.segment(t * nu, nu));
      }
      const Rollout r = rollout_lifted(p, z0, vs);
      double s = 0.0;
      for (int t = 0; t < h; ++t) {
        const Vec e = r.y[t + 1] - y_ref.segment(t * ny, ny);
        const Vec d = vs[t] - (t == 0 ? v_prev : vs[t - 1]);
        s += e.dot(cfg.q * e) + vs[t].dot(cfg.r * vs[t]) + d.dot(cfg.r_d * d);
      }
      return s;
    };
    const Vec v1 = oracle::random_vec(rng, h * nu);
    const Vec v2 = oracle::random_vec(rng, h * nu);
    CHECK(cond.cost(v1, z0, v_prev, y_ref) == doctest::Approx(explicit_cost(v1)).epsilon(1e-10));
    const double k1 = explicit_cost(v1) - (v1.dot(cond.f * v1) + 2.0 * q.dot(v1));
    const double k2 = explicit_cost(v2) - (v2.dot(cond.f * v2) + 2.0 * q.dot(v2));
    CHECK(k1 == doctest::Approx(k2).epsilon(1e-9));
  }
}

TEST_CASE("dense QP optimum matches the sparse formulation") {
  const oracle::DenseSparseReport rep = oracle::dense_sparse_sweep(13, 120);
  INFO("worst deviation " << rep.worst);
  CHECK(rep.compared == 120);
  CHECK(rep.failures == 0);
  CHECK(rep.active >= 30);
  CHECK(rep.worst <= 1e-5);
}

TEST_CASE("constraint rows follow the documented order") {
  CounterRng rng(14);
  const KoopmanPredictor p = oracle::random_model(rng, 2, 2, 2);
  MpcConfig cfg = oracle::base_config(rng, 3, 2, 2);
  cfg.y_lo = Vec::Constant(2, -1.0);
  cfg.y_hi = Vec::Constant(2, 1.0);
  cfg.y_hi(1) = kInf;
  cfg.v_lo = Vec::Constant(2, -2.0);
  cfg.v_hi = Vec::Constant(2, 2.0);
  cfg.dv_lo = Vec::Constant(2, -kInf);
  cfg.dv_hi = Vec::Constant(2, 0.5);
  const CondensedMpc cond = condense(p.a, p.b, p.c, cfg);

  std::vector<ConstraintRow> expected;
  const auto push = [&](RowKind kind, std::vector<int> coords) {
    for (int t = 0; t < 3; ++t) {
      for (int i : coords) {
        expected.push_back({kind, t, i});
      }
    }
  };
  push(RowKind::YUp, {0});
  push(RowKind::YLow, {0, 1});
  push(RowKind::VUp, {0, 1});
  push(RowKind::VLow, {0, 1});
  push(RowKind::DvUp, {0, 1});
  REQUIRE(cond.rows.size() == expected.size());
  REQUIRE(cond.g.rows() == static_cast<Index>(expected.size()));
  const Vec z0 = oracle::random_vec(rng, 2);
  const Vec v_prev = oracle::random_vec(rng, 2);
  const Vec h = cond.h_vec(z0, v_prev);
  const Vec v = oracle::random_vec(rng, 6);
  const Vec y = cond.m * v + cond.cz(z0);
  const Vec dv = cond.d * v + cond.cv(v_prev);
  for (std::size_t r = 0; r < expected.size(); ++r) {
    CHECK(cond.rows[r].kind == expected[r].kind);
    CHECK(cond.rows[r].t == expected[r].t);
    CHECK(cond.rows[r].i == expected[r].i);
    // Slack of each row evaluated directly from the predicted quantities.
    const int t = expected[r].t;
    const int i = expected[r].i;
    double slack = 0.0;
    switch (expected[r].kind) {
      case RowKind::YUp:
        slack = 1.0 - y(t * 2 + i);
        break;
      case RowKind::YLow:
        slack = y(t * 2 + i) + 1.0;
        break;
      case RowKind::VUp:
        slack = 2.0 - v(t * 2 + i);
        break;
      case RowKind::VLow:
        slack = v(t * 2 + i) + 2.0;
        break;
      case RowKind::DvUp:
        slack = 0.5 - dv(t * 2 + i);
        break;
      case RowKind::DvLow:
        break;
    }
    const Index ri = static_cast<Index>(r);
    CHECK(h(ri) - cond.g.row(ri).dot(v) == doctest::Approx(slack).epsilon(1e-10));
  }
}

TEST_CASE("lifted input weight rescales by the lifted half-ranges") {
  const std::vector<LiftedChannel> v = {LiftedChannel{{-2.0, 0.0, 4.0}}, LiftedChannel{{1.0, 0.5, 0.0}}};
  Mat r(2, 2);
  r << 9.0, 0.3, 0.3, 2.0;
  const Mat rv = lifted_input_weight(r, v);
  CHECK(rv(0, 0) == doctest::Approx(1.0));
  CHECK(rv(1, 1) == doctest::Approx(2.0 / 0.25));
  CHECK(rv(0, 1) == doctest::Approx(0.3 / (3.0 * 0.5)));
  CHECK(rv(1, 0) == doctest::Approx(rv(0, 1)));
  CHECK_THROWS_AS(lifted_input_weight(Mat::Identity(1, 1), v), ConfigError);
  const std::vector<LiftedChannel> flat = {LiftedChannel{{0.5, 0.5}}};
  CHECK_THROWS_AS(lifted_input_weight(Mat::Identity(1, 1), flat), ConfigError);
}

TEST_CASE("disturbance augmentation adds a decaying output offset") {
  CounterRng rng(15);
  const KoopmanPredictor p = oracle::random_model(rng, 3, 1, 2);
  const double zeta = 0.7;
  const AugmentedModel m = augment_disturbance(p, zeta);
  REQUIRE(m.a.rows() == 5);
  REQUIRE(m.b.rows() == 5);
  REQUIRE(m.c.cols() == 5);
  const Vec z0 = oracle::random_vec(rng, 3);
  const Vec d0 = oracle::random_vec(rng, 2);
  Vec s(5);
  s << z0, d0;
  Vec z = z0;
  for (int t = 1; t <= 6; ++t) {
    const Vec v = oracle::random_vec(rng, 1);
    s = m.a * s + m.b * v;
    z = p.a * z + p.b * v;
    const Vec expected = p.c * z + std::pow(zeta, t) * d0;
    CHECK((m.c * s - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS_AS(augment_disturbance(p, 1.5), ConfigError);
}

TEST_CASE("mpc configuration validation") {
  MpcConfig cfg = scalar_config();
  CHECK_NOTHROW(cfg.validate(1, 1));
  MpcConfig bad = cfg;
  bad.q = Mat::Identity(2, 2);
  CHECK_THROWS_AS(bad.validate(1, 1), ConfigError);
  bad = cfg;
  bad.r = Mat::Zero(1, 1);
  CHECK_THROWS_AS(bad.validate(1, 1), ConfigError);
  bad = cfg;
  bad.q = -Mat::Identity(1, 1);
  CHECK_THROWS_AS(bad.validate(1, 1), ConfigError);
  bad = cfg;
  bad.y_lo = Vec::Constant(1, 1.0);
  bad.y_hi = Vec::Constant(1, 0.0);
  CHECK_THROWS_AS(bad.validate(1, 1), ConfigError);
  bad = cfg;
  bad.v_lo = Vec::Constant(2, -1.0);
  bad.v_hi = Vec::Constant(2, 1.0);
  CHECK_THROWS_AS(bad.validate(1, 1), ConfigError);
  bad = cfg;
  bad.zeta = -1.5;
  CHECK_THROWS_AS(bad.validate(1, 1), ConfigError);
  bad = cfg;
  bad.horizon = 0;
  CHECK_THROWS_AS(bad.validate(1, 1), ConfigError);
}

TEST_CASE("reference schedule lookup") {
  const std::vector<RefSegment> schedule = {{Vec::Constant(1, 1.0), 2}, {Vec::Constant(1, 2.0), 3}};
  CHECK(reference_at(schedule, 0)(0) == 1.0);
  CHECK(reference_at(schedule, 1)(0) == 1.0);
  CHECK(reference_at(schedule, 2)(0) == 2.0);
  CHECK(reference_at(schedule, 4)(0) == 2.0);
  CHECK(reference_at(schedule, 50)(0) == 2.0);
  CHECK_THROWS_AS(reference_at(std::vector<RefSegment>{}, 0), ConfigError);
}

TEST_CASE("closed loop tracks with an exact model and respects output bounds") {
  const SystemDef plant = scalar_plant();
  const std::vector<RefSegment> schedule = {{Vec::Constant(1, 0.5), 80}, {Vec::Constant(1, -0.4), 80}};

  KoopmanMpc free_ctrl(scalar_model(), scalar_config());
  const RunLog free_log = closed_loop(plant, free_ctrl, Vec::Zero(1), schedule);
  REQUIRE(free_log.rows.size() == 160);
  CHECK_FALSE(free_log.diverged);
  CHECK(std::abs(free_log.rows[79].x(0) - 0.5) <= 1e-3);
  CHECK(std::abs(free_log.final_state(0) + 0.4) <= 1e-3);
  for (const auto& row : free_log.rows) {
    CHECK(row.qp_status == QpStatus::Solved);
    CHECK_FALSE(row.psi_fallback);
    CHECK(row.solve_ms == 0.0);
  }

  MpcConfig bounded = scalar_config();
  bounded.y_lo = Vec::Constant(1, -kInf);
  bounded.y_hi = Vec::Constant(1, 0.3);
  KoopmanMpc bounded_ctrl(scalar_model(), bounded);
  const RunLog log = closed_loop(plant, bounded_ctrl, Vec::Zero(1), schedule);
  double top = -kInf;
  for (const auto& row : log.rows) {
    top = std::max(top, row.x(0));
  }
  CHECK(top <= 0.3 + 1e-6);
  CHECK(std::abs(log.rows[79].x(0) - 0.3) <= 1e-3);
}

TEST_CASE("closed loop is reproducible and warm starts do not change the plan") {
  const SystemDef plant = scalar_plant();
  const std::vector<RefSegment> schedule = {{Vec::Constant(1, 0.7), 30}, {Vec::Constant(1, -0.2), 30}};
  MpcConfig cfg = scalar_config();
  cfg.v_lo = Vec::Constant(1, -1.0);
  cfg.v_hi = Vec::Constant(1, 1.0);
  cfg.dv_lo = Vec::Constant(1, -0.2);
  cfg.dv_hi = Vec::Constant(1, 0.2);
  cfg.zeta = 0.9;
  KoopmanMpc a(scalar_model(), cfg);
  KoopmanMpc b(scalar_model(), cfg);
  const RunLog la = closed_loop(plant, a, Vec::Zero(1), schedule, true);
  const RunLog lb = closed_loop(plant, b, Vec::Zero(1), schedule, true);
  REQUIRE(la.rows.size() == lb.rows.size());
  for (std::size_t i = 0; i < la.rows.size(); ++i) {
    CHECK(la.rows[i].x == lb.rows[i].x);
    CHECK(la.rows[i].u == lb.rows[i].u);
    CHECK(la.rows[i].qp_iters == lb.rows[i].qp_iters);
    CHECK(la.rows[i].stage_cost == lb.rows[i].stage_cost);
  }

  KoopmanMpc warm(scalar_model(), cfg);
  KoopmanMpc cold(scalar_model(), cfg);
  Vec x = Vec::Constant(1, 0.1);
  Vec u = Vec::Zero(1);
  const Vec ref = Vec::Constant(cfg.horizon, 0.6);
  for (int k = 0; k < 10; ++k) {
    const MpcStep sw = warm.step(x, x, u, ref);
    cold.reset_warm_start();
    const MpcStep sc = cold.step(x, x, u, ref);
    // The plan is weakly determined through the small input weights; the
    // objective and the applied input are not.
    CHECK((sw.v_plan - sc.v_plan).cwiseAbs().maxCoeff() <= 1e-5);
    CHECK(sw.predicted_cost == doctest::Approx(sc.predicted_cost).epsilon(1e-8));
    CHECK((sw.u - sc.u).cwiseAbs().maxCoeff() <= 1e-6);
    x = plant.step(x, sw.u);
    u = sw.u;
  }
}
