#include "dfkoop/rbf.hpp"

#include <cmath>

#include "dfkoop/error.hpp"

namespace dfkoop {

double tps_rbf(const Vec& x, const Vec& center) {
  const double r2 = (x - center).squaredNorm();
  if (r2 == 0.0) {
    return 0.0;
  }
  // r^2 log r = r^2 log(r^2) / 2
  return 0.5 * r2 * std::log(r2);
}

int RbfDictionary::size() const {
  return static_cast<int>(centers.size()) + (include_state ? n_x() : 0);
}

Vec RbfDictionary::scale(const Vec& x) const {
  if (!scaled()) {
    return x;
  }
  return (2.0 * (x - box_lo).array() / (box_hi - box_lo).array() - 1.0).matrix();
}

Vec RbfDictionary::unscale(const Vec& s) const {
  if (!scaled()) {
    return s;
  }
  return (box_lo.array() + (s.array() + 1.0) * (box_hi - box_lo).array() / 2.0).matrix();
}

Vec RbfDictionary::lift(const Vec& x) const {
  const Vec s = scale(x);
  Vec z(size());
  Index i = 0;
  for (const auto& c : centers) {
    z(i++) = tps_rbf(s, c);
  }
  if (include_state) {
    z.tail(s.size()) = s;
  }
  return z;
}

void RbfDictionary::validate() const {
  if (state_dim < 1 || size() < 1) {
    throw ConfigError("dictionary is empty");
  }
  const Index n = n_x();
  for (const auto& c : centers) {
    if (c.size() != n) {
      throw ConfigError("dictionary centers have mixed dimensions");
    }
  }
  if (scaled()) {
    if (box_lo.size() != n || box_hi.size() != n || !((box_hi - box_lo).array() > 0.0).all()) {
      throw ConfigError("dictionary scaling box is malformed");
    }
  }
}

}  // namespace dfkoop
