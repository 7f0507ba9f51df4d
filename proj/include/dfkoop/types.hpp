#pragma once

#include <Eigen/Dense>

namespace dfkoop {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Closed interval; either end may be infinite.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] bool contains(double v) const { return v >= lo && v <= hi; }
  [[nodiscard]] double width() const { return hi - lo; }
};

}  // namespace dfkoop
