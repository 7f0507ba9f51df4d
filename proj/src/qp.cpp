#include "dfkoop/qp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/QR>

#include "dfkoop/error.hpp"

namespace dfkoop {

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Solved:
      return "solved";
    case QpStatus::MaxIter:
      return "max-iter";
    case QpStatus::InfeasibleSuspected:
      return "infeasible-suspected";
  }
  return "unknown";
}

namespace {

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

}  // namespace

QpSolver::QpSolver(Mat f, Mat g, QpSettings settings)
    : f_(std::move(f)), g_(std::move(g)), s_(settings), rho_(settings.rho) {
  const Index n = f_.rows();
  if (n < 1 || f_.cols() != n || (g_.size() > 0 && g_.cols() != n)) {
    throw ConfigError("qp: F must be square and G must have as many columns as F");
  }
  if (g_.size() == 0) {
    g_.resize(0, n);
  }
  const double scale = std::max(1.0, f_.cwiseAbs().maxCoeff());
  if ((f_ - f_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ConfigError("qp: F is not symmetric");
  }
  if (!f_.allFinite() || !g_.allFinite()) {
    throw ConfigError("qp: F or G has non-finite entries");
  }
  f_llt_.compute(f_);
  if (f_llt_.info() != Eigen::Success) {
    throw NumericError("qp: F is not positive definite");
  }
  if (!(s_.rho > 0.0) || !(s_.sigma > 0.0) || !(s_.alpha > 0.0 && s_.alpha < 2.0) || s_.max_iter < 1) {
    throw ConfigError("qp: settings out of range");
  }
  factor();
}

void QpSolver::factor() {
  Mat k = f_;
  k.diagonal().array() += s_.sigma;
  k.noalias() += rho_ * g_.transpose() * g_;
  kkt_.compute(k);
  if (kkt_.info() != Eigen::Success) {
    throw NumericError("qp: ADMM system factorization failed");
  }
}

QpSolution QpSolver::solve(const Vec& q, const Vec& h, const QpWarmStart* warm) {
  const Index n = f_.rows();
  const Index m = g_.rows();
  if (q.size() != n || h.size() != m) {
    throw ConfigError("qp: q or h has the wrong size");
  }
  QpSolution sol;
  if (m == 0) {
    sol.v_star = f_llt_.solve(-q);
    sol.mu = Vec(0);
    sol.status = QpStatus::Solved;
    sol.dual_res = inf_norm(f_ * sol.v_star + q);
    sol.objective = 0.5 * sol.v_star.dot(f_ * sol.v_star) + q.dot(sol.v_star);
    return sol;
  }

  Vec x = Vec::Zero(n);
  Vec y = Vec::Zero(m);
  if (warm != nullptr && warm->x.size() == n) {
    x = warm->x;
  }
  if (warm != nullptr && warm->y.size() == m) {
    y = warm->y.cwiseMax(0.0);
  }
  Vec z = (g_ * x).cwiseMin(h);
  Vec y_prev = y;

  const double a = s_.alpha;
  double prim = 0.0;
  double dual = 0.0;
  int it = 0;
  for (it = 1; it <= s_.max_iter; ++it) {
    y_prev = y;
    const Vec rhs = s_.sigma * x - q + g_.transpose() * (rho_ * z - y);
    const Vec x_tilde = kkt_.solve(rhs);
    const Vec z_tilde = g_ * x_tilde;
    x = a * x_tilde + (1.0 - a) * x;
    const Vec z_relaxed = a * z_tilde + (1.0 - a) * z;
    const Vec z_next = (z_relaxed + y / rho_).cwiseMin(h);
    y += rho_ * (z_relaxed - z_next);
    z = z_next;

    const Vec gx = g_ * x;
    const Vec fx = f_ * x;
    const Vec gty = g_.transpose() * y;
    prim = inf_norm(gx - z);
    dual = inf_norm(fx + q + gty);
    const double prim_scale = std::max(inf_norm(gx), inf_norm(z));
    const double dual_scale = std::max({inf_norm(fx), inf_norm(gty), inf_norm(q)});
    if (prim <= s_.eps_abs + s_.eps_rel * prim_scale && dual <= s_.eps_abs + s_.eps_rel * dual_scale) {
      sol.status = QpStatus::Solved;
      break;
    }

    const Vec dy = y - y_prev;
    const double dy_norm = inf_norm(dy);
    if (dy_norm > 0.0) {
      const double tol = s_.eps_infeasible * dy_norm;
      if (inf_norm(g_.transpose() * dy) <= tol && h.dot(dy.cwiseMax(0.0)) < -tol && dy.minCoeff() >= -tol) {
        sol.status = QpStatus::InfeasibleSuspected;
        break;
      }
    }

    if (s_.adaptive_rho_interval > 0 && it % s_.adaptive_rho_interval == 0) {
      const double num = prim / std::max(prim_scale, 1e-30);
      const double den = dual / std::max(dual_scale, 1e-30);
      double proposed = rho_ * std::sqrt(num / std::max(den, 1e-30));
      proposed = std::clamp(proposed, 1e-6, 1e6);
      if (proposed > rho_ * s_.adaptive_rho_tolerance || proposed < rho_ / s_.adaptive_rho_tolerance) {
        rho_ = proposed;
        factor();
      }
    }
  }
  sol.iterations = std::min(it, s_.max_iter);
  sol.v_star = x;
  // y is non-negative in exact arithmetic; clear rounding residue.
  sol.mu = y.cwiseMax(0.0);
  sol.primal_res = prim;
  sol.dual_res = dual;
  if (sol.status == QpStatus::Solved && s_.polish) {
    polish(q, h, z - h + y, sol);
  }
  sol.objective = 0.5 * sol.v_star.dot(f_ * sol.v_star) + q.dot(sol.v_star);
  return sol;
}

void QpSolver::polish(const Vec& q, const Vec& h, const Vec& activity, QpSolution& sol) const {
  const Index n = f_.rows();
  std::vector<Index> active;
  for (Index i = 0; i < g_.rows(); ++i) {
    if (activity(i) > 0.0) {
      active.push_back(i);
    }
  }
  const Index na = static_cast<Index>(active.size());
  Mat kkt = Mat::Zero(n + na, n + na);
  Vec rhs(n + na);
  kkt.topLeftCorner(n, n) = f_;
  rhs.head(n) = -q;
  for (Index j = 0; j < na; ++j) {
    kkt.block(n + j, 0, 1, n) = g_.row(active[j]);
    kkt.block(0, n + j, n, 1) = g_.row(active[j]).transpose();
    rhs(n + j) = h(active[j]);
  }
  const Vec sol_kkt = kkt.colPivHouseholderQr().solve(rhs);
  if (!sol_kkt.allFinite()) {
    return;
  }
  Vec x = sol_kkt.head(n);
  Vec mu = Vec::Zero(g_.rows());
  for (Index j = 0; j < na; ++j) {
    mu(active[j]) = sol_kkt(n + j);
  }
  const Vec gx = g_ * x;
  const double prim = std::max(0.0, (gx - h).maxCoeff());
  const double dual = inf_norm(f_ * x + q + g_.transpose() * mu);
  const double neg = mu.size() > 0 ? std::max(0.0, -mu.minCoeff()) : 0.0;
  const double tol_p = s_.eps_abs + s_.eps_rel * std::max(inf_norm(gx), inf_norm(h));
  const double tol_d = s_.eps_abs + s_.eps_rel * std::max(inf_norm(f_ * x), inf_norm(q));
  if (prim <= tol_p && dual <= tol_d && neg <= tol_d) {
    sol.v_star = x;
    sol.mu = mu.cwiseMax(0.0);
    sol.primal_res = prim;
    sol.dual_res = dual;
    sol.polished = true;
  }
}

QpSolution solve_qp(const QpProblem& p, const QpSettings& settings, const QpWarmStart* warm) {
  QpSolver solver(p.f, p.g, settings);
  return solver.solve(p.q, p.h, warm);
}

}  // namespace dfkoop
