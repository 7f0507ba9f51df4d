#include "dfkoop/systems.hpp"

#include <cmath>

#include "dfkoop/error.hpp"

namespace dfkoop {

Vec rk4_step(const VectorField& rhs, const Vec& x, const Vec& u, double ts) {
  if (!(ts > 0.0)) {
    throw ConfigError("rk4_step: sample time must be positive");
  }
  const Vec k1 = rhs(x, u);
  const Vec k2 = rhs(x + 0.5 * ts * k1, u);
  const Vec k3 = rhs(x + 0.5 * ts * k2, u);
  const Vec k4 = rhs(x + ts * k3, u);
  Vec next = x + (ts / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) {
    throw IntegrationError("rk4_step: non-finite state", std::move(next));
  }
  return next;
}

double onedim_rhs(double x) {
  if (x > 0.0) {
    return -(x - 1.0);
  }
  if (x < 0.0) {
    return -(x + 1.0);
  }
  return 0.0;
}

Vec duffing_rhs(const Vec& x, const Vec& u) {
  Vec dx(2);
  dx(0) = x(1);
  dx(1) = -0.5 * x(1) - x(0) * (4.0 * x(0) * x(0) - 1.0) + 0.5 * u(0);
  return dx;
}

Vec duffing_sq_rhs(const Vec& x, const Vec& u) {
  Vec dx(2);
  dx(0) = x(1);
  dx(1) = -0.5 * x(1) - x(0) * (4.0 * x(0) * x(0) - 1.0) - 0.5 * u(0) * u(0);
  return dx;
}

Vec symdemo_step(const Vec& x, const Vec& u) {
  Vec next(4);
  next(0) = -x(0) * u(0) - std::abs(x(1));
  next(1) = -x(1) + u(1) + u(2);
  next(2) = -x(2) * std::abs(x(1)) + u(1) + u(2);
  next(3) = -x(3);
  return next;
}

Vec SystemDef::step(const Vec& x, const Vec& u) const {
  if (kind == TimeKind::Continuous) {
    return rk4_step(rhs, x, u, ts);
  }
  Vec next = rhs(x, u);
  if (!next.allFinite()) {
    throw IntegrationError(name + ": non-finite state", std::move(next));
  }
  return next;
}

bool SystemDef::in_state_box(const Vec& x) const {
  for (int i = 0; i < n_x; ++i) {
    if (!state_bounds[i].contains(x(i))) {
      return false;
    }
  }
  return true;
}

void SystemDef::validate() const {
  if (n_x < 1 || n_u < 1 || n_y < 1) {
    throw ConfigError(name + ": dimensions must be at least one");
  }
  if (kind == TimeKind::Continuous && !(ts > 0.0)) {
    throw ConfigError(name + ": continuous system needs a positive sample time");
  }
  if (static_cast<int>(state_bounds.size()) != n_x ||
      static_cast<int>(input_bounds.size()) != n_u) {
    throw ConfigError(name + ": bound lists do not match dimensions");
  }
}

namespace {

OutputMap identity_output() {
  return [](const Vec& x) { return x; };
}

SystemDef make_onedim(double ts) {
  SystemDef s;
  s.name = "onedim";
  s.n_x = 1;
  s.n_u = 1;
  s.n_y = 1;
  s.kind = TimeKind::Continuous;
  // The input is accepted for interface uniformity and ignored.
  s.rhs = [](const Vec& x, const Vec&) {
    Vec dx(1);
    dx(0) = onedim_rhs(x(0));
    return dx;
  };
  s.output = identity_output();
  s.ts = ts > 0.0 ? ts : 0.1;
  s.state_bounds = {{-1.0, 1.0}};
  s.input_bounds = {{-1.0, 1.0}};
  s.equilibria = {Vec::Constant(1, -1.0), Vec::Zero(1), Vec::Constant(1, 1.0)};
  return s;
}

SystemDef make_duffing(std::string name, VectorField rhs, double ts) {
  SystemDef s;
  s.name = std::move(name);
  s.n_x = 2;
  s.n_u = 1;
  s.n_y = 2;
  s.kind = TimeKind::Continuous;
  s.rhs = std::move(rhs);
  s.output = identity_output();
  s.ts = ts > 0.0 ? ts : 0.02;
  s.state_bounds = {{-1.0, 1.0}, {-1.0, 1.0}};
  s.input_bounds = {{-1.0, 1.0}};
  s.equilibria = {Vec::Zero(2), Vec::Zero(2), Vec::Zero(2)};
  s.equilibria[0] << -0.5, 0.0;
  s.equilibria[2] << 0.5, 0.0;
  return s;
}

SystemDef make_symdemo() {
  SystemDef s;
  s.name = "symdemo";
  s.n_x = 4;
  s.n_u = 3;
  s.n_y = 4;
  s.kind = TimeKind::Discrete;
  s.rhs = [](const Vec& x, const Vec& u) { return symdemo_step(x, u); };
  s.output = identity_output();
  s.ts = 1.0;
  s.state_bounds.assign(4, {-1.0, 1.0});
  s.input_bounds.assign(3, {-1.0, 1.0});
  s.equilibria = {Vec::Zero(4)};
  return s;
}

}  // namespace

SystemDef make_system(std::string_view name, double ts) {
  SystemDef s;
  if (name == "onedim") {
    s = make_onedim(ts);
  } else if (name == "duffing") {
    s = make_duffing("duffing", duffing_rhs, ts);
  } else if (name == "duffing-sq") {
    s = make_duffing("duffing-sq", duffing_sq_rhs, ts);
  } else if (name == "symdemo") {
    s = make_symdemo();
  } else {
    throw ConfigError("unknown system '" + std::string(name) + "'");
  }
  s.validate();
  return s;
}

std::vector<std::string> system_names() { return {"onedim", "duffing", "duffing-sq", "symdemo"}; }

}  // namespace dfkoop
