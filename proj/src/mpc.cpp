#include "dfkoop/mpc.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <tuple>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "dfkoop/error.hpp"

namespace dfkoop {

namespace {

void check_bounds(const Vec& lo, const Vec& hi, Index n, const std::string& name) {
  if (lo.size() == 0 && hi.size() == 0) {
    return;
  }
  if (lo.size() != n || hi.size() != n) {
    throw ConfigError("mpc." + name + " bounds must have " + std::to_string(n) + " entries");
  }
  for (Index i = 0; i < n; ++i) {
    if (std::isnan(lo(i)) || std::isnan(hi(i)) || lo(i) > hi(i)) {
      throw ConfigError("mpc." + name + " bounds: lower exceeds upper at index " + std::to_string(i));
    }
  }
}

void check_weight(const Mat& w, Index n, const std::string& name, bool definite) {
  if (w.rows() != n || w.cols() != n) {
    throw ConfigError("mpc." + name + " must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (!w.allFinite() || (w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff())) {
    throw ConfigError("mpc." + name + " must be symmetric");
  }
  if (definite) {
    if (Eigen::LLT<Mat>(w).info() != Eigen::Success) {
      throw ConfigError("mpc." + name + " must be positive definite");
    }
  } else if (Eigen::SelfAdjointEigenSolver<Mat>(w, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() <
             -1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff())) {
    throw ConfigError("mpc." + name + " must be positive semidefinite");
  }
}

Mat block_diag_repeat(const Mat& w, int times) {
  Mat out = Mat::Zero(w.rows() * times, w.cols() * times);
  for (int t = 0; t < times; ++t) {
    out.block(t * w.rows(), t * w.cols(), w.rows(), w.cols()) = w;
  }
  return out;
}

Vec or_infinite(const Vec& v, Index n, double sign) {
  return v.size() == 0 ? Vec::Constant(n, sign * std::numeric_limits<double>::infinity()) : v;
}

}  // namespace

void MpcConfig::validate(int n_y, int n_u) const {
  if (horizon < 1) {
    throw ConfigError("mpc.horizon must be at least 1");
  }
  check_weight(q, n_y, "Q", false);
  check_weight(r, n_u, "R", true);
  check_weight(r_d, n_u, "R_d", true);
  check_bounds(y_lo, y_hi, n_y, "y");
  check_bounds(v_lo, v_hi, n_u, "v");
  check_bounds(dv_lo, dv_hi, n_u, "dv");
  if (zeta && !(std::abs(*zeta) <= 1.0)) {
    throw ConfigError("mpc.zeta must lie in [-1, 1]");
  }
  if (knn_k < 1 || knn_candidates.empty()) {
    throw ConfigError("mpc.knn: k and the candidate set must be positive and non-empty");
  }
}

Mat lifted_input_weight(const Mat& r_u, std::span<const LiftedChannel> v_channels) {
  const Index n = static_cast<Index>(v_channels.size());
  if (r_u.rows() != n || r_u.cols() != n) {
    throw ConfigError("input weight size differs from the number of channels");
  }
  Vec s(n);
  for (Index k = 0; k < n; ++k) {
    s(k) = (v_channels[k].max() - v_channels[k].min()) / 2.0;
    if (!(s(k) > 0.0)) {
      throw ConfigError("channel " + std::to_string(k) + " has a degenerate lifted range");
    }
  }
  return r_u.cwiseQuotient(s * s.transpose());
}

Vec CondensedMpc::cv(const Vec& v_prev) const {
  Vec out = Vec::Zero(horizon * n_u);
  out.head(n_u) = -v_prev;
  return out;
}

Vec CondensedMpc::q_vec(const Vec& z0, const Vec& v_prev, const Vec& y_ref) const {
  if (y_ref.size() != horizon * n_y) {
    throw ConfigError("mpc: stacked reference has the wrong length");
  }
  return m.transpose() * (q_h * (cz(z0) - y_ref)) + d.transpose() * (rd_h * cv(v_prev));
}

Vec CondensedMpc::h_vec(const Vec& z0, const Vec& v_prev) const {
  const Vec c_z = cz(z0);
  const Vec c_v = cv(v_prev);
  Vec h(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const Index yi = row.t * n_y + row.i;
    const Index vi = row.t * n_u + row.i;
    switch (row.kind) {
      case RowKind::YUp:
        h(r) = y_hi(row.i) - c_z(yi);
        break;
      case RowKind::YLow:
        h(r) = -y_lo(row.i) + c_z(yi);
        break;
      case RowKind::VUp:
        h(r) = v_hi(row.i);
        break;
      case RowKind::VLow:
        h(r) = -v_lo(row.i);
        break;
      case RowKind::DvUp:
        h(r) = dv_hi(row.i) - c_v(vi);
        break;
      case RowKind::DvLow:
        h(r) = -dv_lo(row.i) + c_v(vi);
        break;
    }
  }
  return h;
}

double CondensedMpc::cost(const Vec& v, const Vec& z0, const Vec& v_prev, const Vec& y_ref) const {
  const Vec e = m * v + cz(z0) - y_ref;
  const Vec dv = d * v + cv(v_prev);
  return e.dot(q_h * e) + v.dot(r_h * v) + dv.dot(rd_h * dv);
}

CondensedMpc condense(const Mat& a, const Mat& b, const Mat& c, const MpcConfig& cfg) {
  const int ny = static_cast<int>(c.rows());
  const int nu = static_cast<int>(b.cols());
  const Index nz = a.rows();
  if (a.cols() != nz || b.rows() != nz || c.cols() != nz) {
    throw ConfigError("condense: inconsistent model dimensions");
  }
  cfg.validate(ny, nu);
  const int h = cfg.horizon;
  CondensedMpc out;
  out.horizon = h;
  out.n_y = ny;
  out.n_u = nu;

  // ca[k] = C A^k
  std::vector<Mat> ca(h + 1);
  ca[0] = c;
  for (int k = 1; k <= h; ++k) {
    ca[k] = ca[k - 1] * a;
  }
  std::vector<Mat> cab(h);
  for (int k = 0; k < h; ++k) {
    cab[k] = ca[k] * b;
  }
  out.m = Mat::Zero(h * ny, h * nu);
  out.cz_map.resize(h * ny, nz);
  for (int t = 0; t < h; ++t) {
    out.cz_map.middleRows(t * ny, ny) = ca[t + 1];
    for (int j = 0; j <= t; ++j) {
      out.m.block(t * ny, j * nu, ny, nu) = cab[t - j];
    }
  }
  out.d = Mat::Identity(h * nu, h * nu);
  for (int t = 1; t < h; ++t) {
    out.d.block(t * nu, (t - 1) * nu, nu, nu) = -Mat::Identity(nu, nu);
  }
  out.q_h = block_diag_repeat(cfg.q, h);
  out.r_h = block_diag_repeat(cfg.r, h);
  out.rd_h = block_diag_repeat(cfg.r_d, h);
  out.f = out.m.transpose() * out.q_h * out.m + out.d.transpose() * out.rd_h * out.d + out.r_h;
  out.f = 0.5 * (out.f + out.f.transpose());

  out.y_lo = or_infinite(cfg.y_lo, ny, -1.0);
  out.y_hi = or_infinite(cfg.y_hi, ny, 1.0);
  out.v_lo = or_infinite(cfg.v_lo, nu, -1.0);
  out.v_hi = or_infinite(cfg.v_hi, nu, 1.0);
  out.dv_lo = or_infinite(cfg.dv_lo, nu, -1.0);
  out.dv_hi = or_infinite(cfg.dv_hi, nu, 1.0);

  std::vector<Vec> g_rows;
  const auto add_rows = [&](RowKind kind, const Vec& bound, int dim, const Mat& base, double sign) {
    for (int t = 0; t < h; ++t) {
      for (int i = 0; i < dim; ++i) {
        if (std::isfinite(bound(i))) {
          out.rows.push_back({kind, t, i});
          g_rows.push_back(sign * base.row(t * dim + i).transpose());
        }
      }
    }
  };
  const Mat eye = Mat::Identity(h * nu, h * nu);
  add_rows(RowKind::YUp, out.y_hi, ny, out.m, 1.0);
  add_rows(RowKind::YLow, out.y_lo, ny, out.m, -1.0);
  add_rows(RowKind::VUp, out.v_hi, nu, eye, 1.0);
  add_rows(RowKind::VLow, out.v_lo, nu, eye, -1.0);
  add_rows(RowKind::DvUp, out.dv_hi, nu, out.d, 1.0);
  add_rows(RowKind::DvLow, out.dv_lo, nu, out.d, -1.0);
  out.g.resize(static_cast<Index>(g_rows.size()), h * nu);
  for (std::size_t r = 0; r < g_rows.size(); ++r) {
    out.g.row(static_cast<Index>(r)) = g_rows[r].transpose();
  }
  return out;
}

AugmentedModel augment_disturbance(const KoopmanPredictor& p, double zeta) {
  if (!(std::abs(zeta) <= 1.0)) {
    throw ConfigError("disturbance decay must lie in [-1, 1]");
  }
  const Index nz = p.n_z();
  const Index ny = p.n_y();
  AugmentedModel m;
  m.a = Mat::Zero(nz + ny, nz + ny);
  m.a.topLeftCorner(nz, nz) = p.a;
  m.a.bottomRightCorner(ny, ny) = zeta * Mat::Identity(ny, ny);
  m.b = Mat::Zero(nz + ny, p.n_u());
  m.b.topRows(nz) = p.b;
  m.c.resize(ny, nz + ny);
  m.c << p.c, Mat::Identity(ny, ny);
  return m;
}

namespace {

CondensedMpc condense_for(const KoopmanPredictor& p, const MpcConfig& cfg) {
  p.validate();
  if (cfg.zeta) {
    const AugmentedModel m = augment_disturbance(p, *cfg.zeta);
    return condense(m.a, m.b, m.c, cfg);
  }
  return condense(p.a, p.b, p.c, cfg);
}

}  // namespace

KoopmanMpc::KoopmanMpc(KoopmanPredictor predictor, MpcConfig cfg)
    : p_(std::move(predictor)),
      cfg_(std::move(cfg)),
      cond_(condense_for(p_, cfg_)),
      solver_(cond_.f, cond_.g, cfg_.qp) {}

MpcStep KoopmanMpc::step(const Vec& x0, const Vec& y0, const Vec& u_prev, const Vec& y_ref) {
  if (!x0.allFinite()) {
    throw NumericError("mpc: initial state is not finite");
  }
  if (y0.size() != p_.n_y() || u_prev.size() != p_.n_u()) {
    throw ConfigError("mpc: measured output or previous input has the wrong size");
  }
  MpcStep out;
  if (cfg_.knn_mode == KnnMode::Adaptive && !p_.dictionary) {
    const Vec xs[] = {x0};
    const Vec ys[] = {y0};
    std::vector<int> ks;
    for (int k : cfg_.knn_candidates) {
      if (static_cast<std::size_t>(k) <= p_.phi_samples.size()) {
        ks.push_back(k);
      }
    }
    out.k = select_knn(p_, xs, ys, cfg_.q, ks);
  } else {
    out.k = cfg_.knn_k;
  }
  Vec z0 = phi_hat(p_, x0, out.k);
  const Vec residual = y0 - p_.c * z0;
  out.lifting_error = residual.dot(cfg_.q * residual);
  if (cfg_.zeta) {
    Vec aug(z0.size() + residual.size());
    aug << z0, residual;
    z0 = std::move(aug);
  }
  const Vec v_prev = psi_eval(p_, u_prev);
  const Vec q = cond_.q_vec(z0, v_prev, y_ref);
  const Vec h = cond_.h_vec(z0, v_prev);

  out.qp = solver_.solve(q, h, warm_ ? &*warm_ : nullptr);
  out.v_plan = out.qp.v_star;
  out.predicted_cost = out.qp.objective;
  const int nu = p_.n_u();
  out.v = out.v_plan.head(nu);
  const PsiInverse inv = psi_invert(p_, out.v);
  out.u = inv.u;
  out.psi_fallback = inv.fallback;

  // Shift the plan and the multipliers one stage ahead, repeating the last stage.
  QpWarmStart next;
  const int hz = cond_.horizon;
  next.x.resize(out.v_plan.size());
  for (int t = 0; t < hz; ++t) {
    next.x.segment(t * nu, nu) = out.v_plan.segment(std::min(t + 1, hz - 1) * nu, nu);
  }
  std::map<std::tuple<int, int, int>, Index> index;
  for (std::size_t r = 0; r < cond_.rows.size(); ++r) {
    const auto& row = cond_.rows[r];
    index[{static_cast<int>(row.kind), row.t, row.i}] = static_cast<Index>(r);
  }
  next.y = out.qp.mu;
  for (std::size_t r = 0; r < cond_.rows.size(); ++r) {
    const auto& row = cond_.rows[r];
    const auto it = index.find({static_cast<int>(row.kind), row.t + 1, row.i});
    if (it != index.end() && out.qp.mu.size() == next.y.size()) {
      next.y(static_cast<Index>(r)) = out.qp.mu(it->second);
    }
  }
  warm_ = std::move(next);
  return out;
}

const Vec& reference_at(std::span<const RefSegment> schedule, int k) {
  if (schedule.empty()) {
    throw ConfigError("empty reference schedule");
  }
  int acc = 0;
  for (const auto& seg : schedule) {
    acc += seg.steps;
    if (k < acc) {
      return seg.ref;
    }
  }
  return schedule.back().ref;
}

RunLog closed_loop(const SystemDef& system, KoopmanMpc& controller, const Vec& x_init,
                   std::span<const RefSegment> schedule, bool preview, bool log_timing) {
  RunLog log;
  log.final_state = x_init;
  int total = 0;
  for (const auto& seg : schedule) {
    if (seg.steps < 0 || seg.ref.size() != system.n_y) {
      throw ConfigError("schedule segment has a negative length or a reference of the wrong size");
    }
    total += seg.steps;
  }
  if (x_init.size() != system.n_x) {
    throw ConfigError("initial state has the wrong dimension");
  }
  const auto& cfg = controller.config();
  const int h = cfg.horizon;
  const int ny = system.n_y;
  Vec x = x_init;
  Vec u_prev = Vec::Zero(system.n_u);
  Vec y_ref(h * ny);
  for (int k = 0; k < total; ++k) {
    for (int t = 0; t < h; ++t) {
      y_ref.segment(t * ny, ny) = preview ? reference_at(schedule, k + t + 1) : reference_at(schedule, k);
    }
    const Vec y = system.observe(x);
    const auto start = std::chrono::steady_clock::now();
    MpcStep s = controller.step(x, y, u_prev, y_ref);
    const auto stop = std::chrono::steady_clock::now();

    RunRow row;
    row.step = k;
    row.t = k * system.ts;
    row.x = x;
    row.y_ref = reference_at(schedule, k);
    row.u = s.u;
    row.v = s.v;
    row.qp_iters = s.qp.iterations;
    row.qp_status = s.qp.status;
    const Vec e = y - row.y_ref;
    row.stage_cost = e.dot(cfg.q * e) + s.v.dot(cfg.r * s.v);
    row.solve_ms = log_timing ? std::chrono::duration<double, std::milli>(stop - start).count() : 0.0;
    row.psi_fallback = s.psi_fallback;
    log.rows.push_back(std::move(row));

    try {
      x = system.step(x, s.u);
    } catch (const IntegrationError& err) {
      log.diverged = true;
      log.message = err.what();
      log.final_state = err.state();
      return log;
    }
    u_prev = s.u;
    log.final_state = x;
  }
  return log;
}

}  // namespace dfkoop
