#include <cmath>

#include <doctest.h>

#include "dfkoop/error.hpp"
#include "dfkoop/rng.hpp"
#include "dfkoop/systems.hpp"

using namespace dfkoop;

namespace {

// Growth factor of one RK4 step on x' = lambda x: the degree-4 Taylor
// polynomial of exp(lambda h).
double rk4_factor(double lambda_h) {
  const double z = lambda_h;
  return 1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
}

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) {
    out(i++) = x;
  }
  return out;
}

}  // namespace

TEST_CASE("rk4 on a linear field equals the Taylor polynomial") {
  const VectorField rhs = [](const Vec& x, const Vec&) { return Vec(-2.0 * x); };
  const Vec x0 = vec({0.7, -1.3});
  const Vec x1 = rk4_step(rhs, x0, Vec::Zero(1), 0.1);
  CHECK(x1(0) == doctest::Approx(0.7 * rk4_factor(-0.2)).epsilon(1e-15));
  CHECK(x1(1) == doctest::Approx(-1.3 * rk4_factor(-0.2)).epsilon(1e-15));
}

TEST_CASE("rk4 global error shrinks at fourth order") {
  const VectorField rhs = [](const Vec& x, const Vec&) {
    Vec dx(2);
    dx << x(1), -x(0);
    return dx;
  };
  auto error_at_one = [&rhs](int steps) {
    Vec x = vec({1.0, 0.0});
    for (int i = 0; i < steps; ++i) {
      x = rk4_step(rhs, x, Vec::Zero(1), 1.0 / steps);
    }
    return (x - vec({std::cos(1.0), -std::sin(1.0)})).norm();
  };
  const double ratio = error_at_one(10) / error_at_one(20);
  CHECK(ratio > 14.0);
  CHECK(ratio < 18.0);
}

TEST_CASE("rk4 rejects a non-finite result") {
  const VectorField rhs = [](const Vec& x, const Vec&) { return Vec(x.array() * 1e300); };
  CHECK_THROWS_AS(rk4_step(rhs, vec({1e10}), Vec::Zero(1), 1.0), IntegrationError);
}

TEST_CASE("onedim follows its closed form on either side of zero") {
  const SystemDef s = make_system("onedim");
  CHECK(s.ts == 0.1);
  for (double x0 : {0.3, 0.9, -0.2, -0.75}) {
    const double target = x0 > 0 ? 1.0 : -1.0;
    Vec x = vec({x0});
    x = s.step(x, Vec::Zero(1));
    CHECK(x(0) == doctest::Approx(target + (x0 - target) * rk4_factor(-0.1)).epsilon(1e-15));
    for (int i = 1; i < 10; ++i) {
      x = s.step(x, Vec::Zero(1));
    }
    CHECK(std::abs(x(0) - (target + (x0 - target) * std::exp(-1.0))) < 1e-6);
  }
  CHECK(s.step(Vec::Zero(1), Vec::Zero(1))(0) == 0.0);
}

TEST_CASE("registered equilibria are fixed points under zero input") {
  for (const auto& name : system_names()) {
    const SystemDef s = make_system(name);
    for (const auto& xe : s.equilibria) {
      CHECK((s.step(xe, Vec::Zero(s.n_u)) - xe).norm() < 1e-14);
    }
  }
}

TEST_CASE("duffing fields match the equations") {
  const Vec x = vec({0.4, -0.3});
  const Vec u = vec({0.6});
  const Vec f = duffing_rhs(x, u);
  CHECK(f(0) == -0.3);
  CHECK(f(1) == doctest::Approx(-0.5 * -0.3 - 0.4 * (4 * 0.16 - 1) + 0.5 * 0.6));
  const Vec g = duffing_sq_rhs(x, u);
  CHECK(g(1) == doctest::Approx(-0.5 * -0.3 - 0.4 * (4 * 0.16 - 1) - 0.5 * 0.36));
  CHECK(duffing_sq_rhs(x, u) == duffing_sq_rhs(x, Vec(-u)));
}

TEST_CASE("symdemo is equivariant under its sign group") {
  const SystemDef s = make_system("symdemo");
  CounterRng rng(5);
  const int flips[4][2] = {{1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
  for (int trial = 0; trial < 50; ++trial) {
    Vec x(4);
    Vec u(3);
    for (int i = 0; i < 4; ++i) x(i) = rng.uniform(-1, 1);
    for (int i = 0; i < 3; ++i) u(i) = rng.uniform(-1, 1);
    for (const auto& f : flips) {
      const Vec gx = vec({1.0, double(f[0]), double(f[0]), double(f[1])});
      const Vec gu = vec({1.0, double(f[0]), double(f[0])});
      const Vec lhs = s.step(gx.cwiseProduct(x), gu.cwiseProduct(u));
      const Vec rhs = gx.cwiseProduct(s.step(x, u));
      CHECK((lhs - rhs).norm() == 0.0);
    }
  }
}

TEST_CASE("unknown system names are rejected") {
  CHECK_THROWS_AS(make_system("vanderpol"), ConfigError);
  CHECK(make_system("duffing", 0.05).ts == 0.05);
}
