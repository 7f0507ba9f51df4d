#pragma once

#include <vector>

#include "dfkoop/types.hpp"

namespace dfkoop {

/// Thin-plate spline r^2 log r, with value 0 at r = 0.
double tps_rbf(const Vec& x, const Vec& center);

/// Fixed lifting x -> [rbf(s(x), c_1) ... rbf(s(x), c_m), s(x)] where s maps
/// the state box affinely onto [-1, 1]^n_x (identity when scaling is off).
struct RbfDictionary {
  int state_dim = 0;
  std::vector<Vec> centers;
  bool include_state = true;
  /// Empty vectors disable scaling.
  Vec box_lo;
  Vec box_hi;

  [[nodiscard]] int n_x() const { return state_dim; }
  [[nodiscard]] int size() const;
  [[nodiscard]] bool scaled() const { return box_lo.size() > 0; }
  [[nodiscard]] Vec scale(const Vec& x) const;
  [[nodiscard]] Vec unscale(const Vec& s) const;
  [[nodiscard]] Vec lift(const Vec& x) const;
  void validate() const;
};

}  // namespace dfkoop
