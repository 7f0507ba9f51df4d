#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dfkoop/types.hpp"

namespace dfkoop {

/// Right-hand side f(x, u): the vector field of a continuous system or the
/// successor map of a discrete one.
using VectorField = std::function<Vec(const Vec& x, const Vec& u)>;
using OutputMap = std::function<Vec(const Vec& x)>;

enum class TimeKind { Continuous, Discrete };

/// A benchmark dynamical system together with its sampling.
struct SystemDef {
  std::string name;
  int n_x = 0;
  int n_u = 0;
  int n_y = 0;
  TimeKind kind = TimeKind::Continuous;
  VectorField rhs;
  OutputMap output;
  double ts = 1.0;
  std::vector<Interval> state_bounds;
  std::vector<Interval> input_bounds;
  /// Equilibria of the sampled map under zero input.
  std::vector<Vec> equilibria;

  /// The discrete-time map x+ = f(x, u); RK4 with zero-order hold for
  /// continuous systems.
  [[nodiscard]] Vec step(const Vec& x, const Vec& u) const;
  [[nodiscard]] Vec observe(const Vec& x) const { return output(x); }
  [[nodiscard]] bool in_state_box(const Vec& x) const;
  void validate() const;
};

/// Classical four-stage Runge-Kutta step with the input held constant.
/// Throws IntegrationError when the result is not finite.
Vec rk4_step(const VectorField& rhs, const Vec& x, const Vec& u, double ts);

/// Piecewise-linear scalar field with stable equilibria at +-1 and an
/// unstable one at 0.
double onedim_rhs(double x);

/// Damped, forced Duffing oscillator.
Vec duffing_rhs(const Vec& x, const Vec& u);

/// Duffing oscillator forced through -0.5 u^2.
Vec duffing_sq_rhs(const Vec& x, const Vec& u);

/// Four-state discrete map with a sign-symmetry group of order four.
Vec symdemo_step(const Vec& x, const Vec& u);

/// Registry lookup: "onedim", "duffing", "duffing-sq", "symdemo".
/// A positive ts overrides the default sample time of continuous systems.
SystemDef make_system(std::string_view name, double ts = 0.0);
std::vector<std::string> system_names();

}  // namespace dfkoop
