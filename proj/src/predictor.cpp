#include "dfkoop/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "dfkoop/error.hpp"
#include "dfkoop/rng.hpp"

namespace dfkoop {

int KoopmanPredictor::n_x() const {
  if (dictionary) {
    return dictionary->n_x();
  }
  if (!phi_samples.empty()) {
    return static_cast<int>(phi_samples.front().x.size());
  }
  return structure ? structure->n_x : 0;
}

void KoopmanPredictor::validate() const {
  const Index nz = a.rows();
  if (nz < 1 || a.cols() != nz) {
    throw ConfigError("predictor: A must be square and non-empty");
  }
  if (b.rows() != nz || c.cols() != nz || c.rows() < 1) {
    throw ConfigError("predictor: B/C dimensions do not match A");
  }
  if (static_cast<Index>(u_channels.size()) != b.cols() || v_channels.size() != u_channels.size()) {
    throw ConfigError("predictor: need one U and one V channel per input column");
  }
  for (std::size_t k = 0; k < u_channels.size(); ++k) {
    if (u_channels[k].size() != v_channels[k].size()) {
      throw ConfigError("predictor: channel " + std::to_string(k) + " has unequal U/V level counts");
    }
  }
  if (!(ts > 0.0)) {
    throw ConfigError("predictor: ts must be positive");
  }
  if (dictionary) {
    dictionary->validate();
    if (dictionary->size() != nz) {
      throw ConfigError("predictor: dictionary size differs from n_z");
    }
  } else if (phi_samples.empty()) {
    throw ConfigError("predictor: no lifted samples");
  }
  const int nx = n_x();
  for (const auto& s : phi_samples) {
    if (s.x.size() != nx || s.z.size() != nz) {
      throw ConfigError("predictor: lifted sample has wrong dimensions");
    }
  }
  if (structure) {
    const auto& s = *structure;
    if (s.n_z != nz || s.n_u != b.cols() || s.n_x != c.rows()) {
      throw ConfigError("predictor: symmetry structure dimensions do not match");
    }
    const auto off = [](const Mat& m, const Mat& mask) {
      return (m.array() * (1.0 - mask.array())).abs().maxCoeff();
    };
    if (off(a, s.mask_a) != 0.0 || off(b, s.mask_b) != 0.0 || off(c, s.mask_c) != 0.0) {
      throw ConfigError("predictor: matrices have entries outside the symmetry masks");
    }
  }
}

namespace {

void require_finite(const Vec& v, const char* what, std::size_t t) {
  if (!v.allFinite()) {
    throw NumericError(std::string("rollout: non-finite ") + what + " at step " + std::to_string(t));
  }
}

}  // namespace

Rollout rollout_lifted(const KoopmanPredictor& p, const Vec& z0, std::span<const Vec> v) {
  if (z0.size() != p.n_z()) {
    throw ConfigError("rollout: z0 has wrong dimension");
  }
  Rollout out;
  out.z.reserve(v.size() + 1);
  out.y.reserve(v.size() + 1);
  out.z.push_back(z0);
  out.y.push_back(p.c * z0);
  for (std::size_t t = 0; t < v.size(); ++t) {
    if (v[t].size() != p.n_u()) {
      throw ConfigError("rollout: lifted input has wrong dimension");
    }
    out.z.push_back(p.a * out.z.back() + p.b * v[t]);
    out.y.push_back(p.c * out.z.back());
    require_finite(out.z.back(), "lifted state", t + 1);
  }
  return out;
}

Rollout rollout(const KoopmanPredictor& p, const Vec& z0, std::span<const InputSelector> selectors) {
  std::vector<Vec> v;
  v.reserve(selectors.size());
  for (const auto& s : selectors) {
    v.push_back(select_input(s, p.v_channels));
  }
  return rollout_lifted(p, z0, v);
}

namespace {

struct Neighbour {
  double dist;
  std::size_t index;
};

/// The kmax nearest samples in increasing distance; equal distances keep
/// sample order.
std::vector<Neighbour> nearest(const KoopmanPredictor& p, const Vec& x, int kmax) {
  if (p.phi_samples.empty()) {
    throw ConfigError("phi_hat: no lifted samples");
  }
  if (x.size() != p.n_x()) {
    throw ConfigError("phi_hat: state has wrong dimension");
  }
  std::vector<Neighbour> all(p.phi_samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = {(p.phi_samples[i].x - x).norm(), i};
  }
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(kmax), all.size());
  const auto less = [](const Neighbour& l, const Neighbour& r) {
    return l.dist < r.dist || (l.dist == r.dist && l.index < r.index);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), less);
  all.resize(n);
  return all;
}

Vec blend(const KoopmanPredictor& p, const std::vector<Neighbour>& nb, int k) {
  if (nb.front().dist == 0.0) {
    return p.phi_samples[nb.front().index].z;
  }
  Vec z = Vec::Zero(p.n_z());
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    const double w = 1.0 / (nb[i].dist + kIdwGuard);
    z += w * p.phi_samples[nb[i].index].z;
    total += w;
  }
  return z / total;
}

void check_k(const KoopmanPredictor& p, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > p.phi_samples.size()) {
    throw ConfigError("phi_hat: neighbour count " + std::to_string(k) + " outside [1, " +
                      std::to_string(p.phi_samples.size()) + "]");
  }
}

}  // namespace

Vec phi_hat(const KoopmanPredictor& p, const Vec& x, int k) {
  if (p.dictionary) {
    return p.dictionary->lift(x);
  }
  check_k(p, k);
  return blend(p, nearest(p, x, k), k);
}

std::vector<int> default_knn_candidates() { return {1, 2, 3, 4, 5, 6, 7, 8}; }

int select_knn(const KoopmanPredictor& p, std::span<const Vec> states, std::span<const Vec> outputs,
               const Mat& q, std::span<const int> candidates) {
  if (candidates.empty()) {
    throw ConfigError("select_knn: empty candidate set");
  }
  if (states.size() != outputs.size()) {
    throw ConfigError("select_knn: states and outputs differ in count");
  }
  if (p.dictionary) {
    return *std::min_element(candidates.begin(), candidates.end());
  }
  std::vector<int> ks(candidates.begin(), candidates.end());
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  for (int k : ks) {
    check_k(p, k);
  }
  std::vector<double> cost(ks.size(), 0.0);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto nb = nearest(p, states[i], ks.back());
    for (std::size_t j = 0; j < ks.size(); ++j) {
      const Vec e = outputs[i] - p.c * blend(p, nb, ks[j]);
      cost[j] += e.dot(q * e);
    }
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < ks.size(); ++j) {
    if (cost[j] < cost[best]) {
      best = j;
    }
  }
  return ks[best];
}

double lifting_error(const KoopmanPredictor& p, const Vec& x, const Vec& y, const Mat& q, int k) {
  const Vec e = y - p.c * phi_hat(p, x, k);
  return e.dot(q * e);
}

double psi_eval_channel(const QuantizedChannel& u, const LiftedChannel& v, double x) {
  const int q = u.size();
  if (q == 1) {
    return v.levels[0];
  }
  x = std::clamp(x, u[0], u[q - 1]);
  int j = 0;
  while (j < q - 2 && x > u[j + 1]) {
    ++j;
  }
  const double t = (x - u[j]) / (u[j + 1] - u[j]);
  return v.levels[j] + t * (v.levels[j + 1] - v.levels[j]);
}

double psi_invert_channel(const QuantizedChannel& u, const LiftedChannel& v, double y, bool& fallback) {
  const int q = u.size();
  if (q == 1) {
    return u[0];
  }
  y = std::clamp(y, v.min(), v.max());
  if (v.strictly_monotone()) {
    for (int j = 0; j + 1 < q; ++j) {
      const double lo = std::min(v.levels[j], v.levels[j + 1]);
      const double hi = std::max(v.levels[j], v.levels[j + 1]);
      if (y >= lo && y <= hi) {
        const double t = (y - v.levels[j]) / (v.levels[j + 1] - v.levels[j]);
        return u[j] + t * (u[j + 1] - u[j]);
      }
    }
  }
  fallback = true;
  int best = 0;
  for (int j = 1; j < q; ++j) {
    if (std::abs(v.levels[j] - y) < std::abs(v.levels[best] - y)) {
      best = j;
    }
  }
  return u[best];
}

Vec psi_eval(const KoopmanPredictor& p, const Vec& u) {
  if (u.size() != p.n_u()) {
    throw ConfigError("psi_eval: input has wrong dimension");
  }
  Vec v(u.size());
  for (Index k = 0; k < u.size(); ++k) {
    v(k) = psi_eval_channel(p.u_channels[k], p.v_channels[k], u(k));
  }
  return v;
}

PsiInverse psi_invert(const KoopmanPredictor& p, const Vec& v) {
  if (v.size() != p.n_u()) {
    throw ConfigError("psi_invert: lifted input has wrong dimension");
  }
  PsiInverse out;
  out.u.resize(v.size());
  for (Index k = 0; k < v.size(); ++k) {
    out.u(k) = psi_invert_channel(p.u_channels[k], p.v_channels[k], v(k), out.fallback);
  }
  return out;
}

double check_equivariance(const KoopmanPredictor& p, const SymmetryStructure& sym, int probes,
                          std::uint64_t seed) {
  if (sym.n_z != p.n_z() || sym.n_u != p.n_u() || sym.n_x != p.n_y()) {
    throw ConfigError("check_equivariance: structure dimensions do not match the predictor");
  }
  CounterRng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    Vec z(p.n_z());
    Vec v(p.n_u());
    for (Index j = 0; j < z.size(); ++j) {
      z(j) = rng.uniform(-1.0, 1.0);
    }
    for (Index j = 0; j < v.size(); ++j) {
      v(j) = rng.uniform(-1.0, 1.0);
    }
    const Vec next = p.a * z + p.b * v;
    const Vec y = p.c * z;
    for (int g = 0; g < sym.order(); ++g) {
      const Vec lhs = p.a * sym.act_z(g, z) + p.b * sym.act_u(g, v);
      worst = std::max(worst, (lhs - sym.act_z(g, next)).lpNorm<Eigen::Infinity>());
      worst = std::max(worst, (p.c * sym.act_z(g, z) - sym.act_x(g, y)).lpNorm<Eigen::Infinity>());
    }
  }
  return worst;
}

std::vector<std::complex<double>> continuous_eigenvalues(const Mat& a, double ts, double tol) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw ConfigError("continuous_eigenvalues: A must be square and non-empty");
  }
  if (!(ts > 0.0)) {
    throw ConfigError("continuous_eigenvalues: ts must be positive");
  }
  Eigen::EigenSolver<Mat> solver(a, false);
  if (solver.info() != Eigen::Success) {
    throw NumericError("continuous_eigenvalues: eigensolver did not converge");
  }
  std::vector<std::complex<double>> out;
  for (Index i = 0; i < a.rows(); ++i) {
    const std::complex<double> lambda = solver.eigenvalues()(i);
    if (std::abs(lambda) < tol) {
      throw NumericError("continuous_eigenvalues: eigenvalue too close to zero for the logarithm");
    }
    out.push_back(std::log(lambda) / ts);
  }
  std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) {
    return l.real() < r.real() || (l.real() == r.real() && l.imag() < r.imag());
  });
  return out;
}

}  // namespace dfkoop
