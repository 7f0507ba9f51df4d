#include <doctest.h>

#include "dfkoop/error.hpp"
#include "dfkoop/qp.hpp"
#include "mpc_oracle.hpp"
#include "oracles.hpp"

using namespace dfkoop;

TEST_CASE("solve_qp matches the active-set enumeration oracle") {
  const oracle::QpReport rep = oracle::qp_sweep(314, 300);
  INFO("worst deviation " << rep.worst);
  CHECK(rep.trials == 300);
  CHECK(rep.unsolved == 0);
  CHECK(rep.negative_mu == 0);
  CHECK(rep.worst <= 1e-6);
  CHECK(rep.worst_stationarity <= 1e-6);
}

TEST_CASE("unconstrained problems solve in closed form") {
  CounterRng rng(1);
  const Mat f = oracle::random_spd(rng, 4);
  const Vec q = oracle::random_vec(rng, 4);
  const QpSolution sol = solve_qp({f, q, Mat(0, 4), Vec(0)});
  CHECK(sol.status == QpStatus::Solved);
  CHECK((sol.v_star + f.ldlt().solve(q)).norm() <= 1e-12);
  CHECK(sol.objective == doctest::Approx(0.5 * sol.v_star.dot(f * sol.v_star) + q.dot(sol.v_star)));
}

TEST_CASE("box-constrained scalar") {
  // min 1/2 x^2 - 3x  s.t.  x <= 1  ->  x = 1, mu = 2
  QpProblem p{Mat::Identity(1, 1), Vec::Constant(1, -3.0), Mat::Identity(1, 1), Vec::Constant(1, 1.0)};
  const QpSolution sol = solve_qp(p);
  CHECK(sol.v_star(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sol.mu(0) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("invalid matrices are rejected") {
  Mat f(2, 2);
  f << 1.0, 0.5, 0.4, 1.0;
  CHECK_THROWS_AS(QpSolver(f, Mat(0, 2)), ConfigError);
  Mat indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(QpSolver(indefinite, Mat(0, 2)), NumericError);
  CHECK_THROWS_AS(QpSolver(Mat::Identity(2, 2), Mat::Zero(1, 3)), ConfigError);
}

TEST_CASE("infeasible constraints are reported") {
  // x <= -1 and -x <= -1 (x >= 1)
  Mat g(2, 1);
  g << 1.0, -1.0;
  QpProblem p{Mat::Identity(1, 1), Vec::Zero(1), g, Vec::Constant(2, -1.0)};
  const QpSolution sol = solve_qp(p);
  CHECK(sol.status == QpStatus::InfeasibleSuspected);
  CHECK(to_string(sol.status) == "infeasible-suspected");
  CHECK(to_string(QpStatus::Solved) == "solved");
  CHECK(to_string(QpStatus::MaxIter) == "max-iter");
}

TEST_CASE("warm starting from the solution converges immediately") {
  CounterRng rng(99);
  const Index n = 5;
  const Mat f = oracle::random_spd(rng, n);
  const Mat g = oracle::random_matrix(rng, 8, n);
  const Vec h = g * oracle::random_vec(rng, n) + Vec::Constant(8, 0.05);
  const Vec q = oracle::random_vec(rng, n, 3.0);
  QpSettings s;
  s.polish = false;
  QpSolver solver(f, g, s);
  const QpSolution cold = solver.solve(q, h);
  REQUIRE(cold.status == QpStatus::Solved);
  const QpWarmStart warm{cold.v_star, cold.mu};
  const QpSolution again = solver.solve(q, h, &warm);
  CHECK(again.status == QpStatus::Solved);
  CHECK(again.iterations < cold.iterations);
  CHECK((again.v_star - cold.v_star).norm() <= 1e-6);
}

TEST_CASE("iteration cap") {
  CounterRng rng(4);
  const Mat f = oracle::random_spd(rng, 4, 1e-3);
  const Mat g = oracle::random_matrix(rng, 6, 4);
  QpSettings s;
  s.max_iter = 2;
  s.polish = false;
  const QpSolution sol =
      QpSolver(f, g, s).solve(oracle::random_vec(rng, 4, 5.0), g * oracle::random_vec(rng, 4));
  CHECK(sol.status == QpStatus::MaxIter);
  CHECK(sol.iterations == 2);
}
