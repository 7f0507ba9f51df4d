#include "dfkoop/learner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include <Eigen/Eigenvalues>

#include "dfkoop/rng.hpp"

namespace dfkoop {

void LearnConfig::validate() const {
  if (n_z < 1) {
    throw ConfigError("learn.n_z must be positive");
  }
  if (iters < 0 || v_freeze_iters < 0 || v_freeze_iters > iters) {
    throw ConfigError("learn.v_freeze_iters must lie in [0, learn.iters]");
  }
  if (w0 < 0.0 || w_mono < 0.0 || w_sym_psi < 0.0) {
    throw ConfigError("learn weights must be non-negative");
  }
  if (!(adam.alpha > 0.0) || adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 ||
      adam.beta2 >= 1.0 || !(adam.eps > 0.0)) {
    throw ConfigError("learn.adam parameters out of range");
  }
  if (!(init_range > 0.0)) {
    throw ConfigError("learn.init_range must be positive");
  }
}

namespace {

/// Orders vectors lexicographically by bit pattern so that only bit-identical
/// initial states share a slot.
struct BitwiseLess {
  bool operator()(const Vec& l, const Vec& r) const {
    return std::lexicographical_compare(l.data(), l.data() + l.size(), r.data(), r.data() + r.size());
  }
};

}  // namespace

TrainingData prepare_training_data(const Dataset& ds) {
  if (ds.trajectories.empty()) {
    throw ConfigError("training needs at least one trajectory");
  }
  TrainingData d;
  d.n_x = ds.n_x;
  d.n_u = ds.n_u;
  d.n_y = ds.n_y;
  d.horizon = ds.horizon;
  d.channels = ds.channels;
  const int n = static_cast<int>(ds.trajectories.size());
  d.y.assign(d.horizon + 1, Mat(d.n_y, n));
  d.sel.assign(d.horizon, Eigen::MatrixXi(d.n_u, n));

  std::map<Vec, int, BitwiseLess> slots;
  std::map<int, int> index_of_id;
  for (int i = 0; i < n; ++i) {
    const auto& t = ds.trajectories[i];
    if (t.horizon() != d.horizon || static_cast<int>(t.outputs.size()) != d.horizon + 1 ||
        t.states.empty()) {
      throw ConfigError("trajectory " + std::to_string(t.id) + " does not have the dataset horizon");
    }
    index_of_id[t.id] = i;
    const auto [it, inserted] = slots.try_emplace(t.states.front(), d.slots());
    if (inserted) {
      d.slot_x.push_back(t.states.front());
    }
    d.slot_of.push_back(it->second);
    for (int s = 0; s <= d.horizon; ++s) {
      if (t.outputs[s].size() != d.n_y) {
        throw ConfigError("trajectory " + std::to_string(t.id) + " has a malformed output");
      }
      d.y[s].col(i) = t.outputs[s];
    }
    for (int s = 0; s < d.horizon; ++s) {
      select_input(t.selectors[s], ds.channels);  // range check
      for (int k = 0; k < d.n_u; ++k) {
        d.sel[s](k, i) = t.selectors[s].idx[k];
      }
    }
  }
  for (const auto& [a, b] : ds.successors) {
    const auto ia = index_of_id.find(a);
    const auto ib = index_of_id.find(b);
    if (ia == index_of_id.end() || ib == index_of_id.end()) {
      throw ConfigError("successor pair references an unknown trajectory");
    }
    d.links.emplace_back(ia->second, d.slot_of[ib->second]);
  }
  return d;
}

DecisionVars init_variables(const LearnConfig& cfg, const TrainingData& data, const SymmetryStructure* sym) {
  CounterRng rng(cfg.seed);
  const double r = cfg.init_range;
  const auto fill = [&](Index rows, Index cols) {
    Mat m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        m(i, j) = rng.uniform(-r, r);
      }
    }
    return m;
  };
  DecisionVars v;
  v.a = fill(cfg.n_z, cfg.n_z);
  v.b = fill(cfg.n_z, data.n_u);
  v.c = fill(data.n_y, cfg.n_z);
  v.z0 = fill(cfg.n_z, data.slots());
  for (const auto& ch : data.channels) {
    v.v.push_back(Eigen::Map<const Vec>(ch.levels().data(), ch.size()));
  }
  if (sym != nullptr) {
    if (sym->n_z != cfg.n_z || sym->n_u != data.n_u || sym->n_x != data.n_y) {
      throw ConfigError("symmetry structure dimensions do not match the learning problem");
    }
    apply_masks(*sym, v.a, v.b, v.c);
  }
  if (cfg.stabilize_a) {
    const double rho = Eigen::EigenSolver<Mat>(v.a, false).eigenvalues().cwiseAbs().maxCoeff();
    if (rho >= 1.0) {
      v.a *= 0.99 / rho;
    }
  }
  return v;
}

namespace {

double sign(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

double mono_penalty_grad(const Vec& v, Vec* grad, double weight) {
  const Index q = v.size();
  if (q < 3) {
    return 0.0;
  }
  // |v_q - v_1| - sum |dv| equals -2 times the total length of the steps
  // against the overall direction. Summing those steps directly keeps the
  // value exactly zero for monotone levels and nonzero otherwise.
  const double dir = v(q - 1) >= v(0) ? 1.0 : -1.0;
  double against = 0.0;
  for (Index i = 0; i + 1 < q; ++i) {
    const double d = v(i + 1) - v(i);
    if (d * dir < 0.0) {
      against += std::abs(d);
    }
  }
  const double s = -2.0 * against;
  if (grad != nullptr && s != 0.0) {
    const double f = 2.0 * weight * s;
    const double end = sign(v(q - 1) - v(0));
    (*grad)(q - 1) += f * end;
    (*grad)(0) -= f * end;
    for (Index i = 0; i + 1 < q; ++i) {
      const double d = sign(v(i + 1) - v(i));
      (*grad)(i + 1) -= f * d;
      (*grad)(i) += f * d;
    }
  }
  return s * s;
}

std::vector<bool> flipped_channels(const SymmetryStructure& sym) {
  std::vector<bool> flipped(sym.n_u, false);
  for (const auto& g : sym.gamma_u) {
    for (int k = 0; k < sym.n_u; ++k) {
      flipped[k] = flipped[k] || g[k] < 0;
    }
  }
  return flipped;
}

double psi_symmetry_grad(const std::vector<Vec>& v, const std::vector<QuantizedChannel>& u,
                         const SymmetryStructure& sym, std::vector<Vec>* grad, double weight) {
  if (v.size() != u.size() || static_cast<int>(u.size()) != sym.n_u) {
    throw ConfigError("psi symmetry: channel count differs from the structure's n_u");
  }
  const auto flipped = flipped_channels(sym);
  double total = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!flipped[k]) {
      continue;
    }
    for (int j = 0; j < u[k].size(); ++j) {
      const int m = u[k].mirror_index(j);
      if (m < 0) {
        throw ConfigError("psi symmetry: channel " + std::to_string(k) + " is not closed under negation");
      }
      const double e = v[k](j) + v[k](m);
      total += e * e;
      if (grad != nullptr) {
        (*grad)[k](j) += 2.0 * weight * e;
        (*grad)[k](m) += 2.0 * weight * e;
      }
    }
  }
  return total;
}

void mask_gradient(DecisionVars& g, const SymmetryStructure* sym) {
  if (sym != nullptr) {
    apply_masks(*sym, g.a, g.b, g.c);
  }
}

/// Lifted inputs at step t as an n_u x N matrix.
Mat lifted_inputs(const DecisionVars& vars, const TrainingData& data, int t) {
  const auto& sel = data.sel[t];
  Mat v(data.n_u, sel.cols());
  for (Index i = 0; i < sel.cols(); ++i) {
    for (Index k = 0; k < data.n_u; ++k) {
      v(k, i) = vars.v[k](sel(k, i));
    }
  }
  return v;
}

void check_dims(const DecisionVars& vars, const TrainingData& data) {
  const Index nz = vars.a.rows();
  if (vars.a.cols() != nz || vars.b.rows() != nz || vars.b.cols() != data.n_u || vars.c.rows() != data.n_y ||
      vars.c.cols() != nz || vars.z0.rows() != nz || vars.z0.cols() != data.slots() ||
      static_cast<int>(vars.v.size()) != data.n_u) {
    throw ConfigError("decision variables do not match the training data");
  }
  for (int k = 0; k < data.n_u; ++k) {
    if (vars.v[k].size() != data.channels[k].size()) {
      throw ConfigError("lifted channel " + std::to_string(k) + " has the wrong level count");
    }
  }
}

LossBreakdown evaluate(const DecisionVars& vars, const TrainingData& data, const LearnConfig& cfg,
                       const SymmetryStructure* sym, DecisionVars* grad) {
  check_dims(vars, data);
  const int n = data.count();
  const int h = data.horizon;
  const Index nz = vars.a.rows();

  std::vector<Mat> z(h + 1);
  std::vector<Mat> v(h);
  z[0].resize(nz, n);
  for (int i = 0; i < n; ++i) {
    z[0].col(i) = vars.z0.col(data.slot_of[i]);
  }
  for (int t = 0; t < h; ++t) {
    v[t] = lifted_inputs(vars, data, t);
    z[t + 1].noalias() = vars.a * z[t];
    z[t + 1].noalias() += vars.b * v[t];
  }

  LossBreakdown out;
  std::vector<Mat> r(h + 1);
  for (int t = 0; t <= h; ++t) {
    r[t].noalias() = vars.c * z[t];
    r[t] -= data.y[t];
    out.fit += r[t].squaredNorm();
  }
  Mat end_err = Mat::Zero(nz, n);
  std::vector<Vec> link_err;
  link_err.reserve(data.links.size());
  for (const auto& [a, slot] : data.links) {
    link_err.push_back(z[h].col(a) - vars.z0.col(slot));
    out.endpoint += cfg.w0 * link_err.back().squaredNorm();
    end_err.col(a) += link_err.back();
  }
  double mono = 0.0;
  double psym = 0.0;
  if (grad != nullptr) {
    grad->a = Mat::Zero(nz, nz);
    grad->b = Mat::Zero(nz, data.n_u);
    grad->c = Mat::Zero(data.n_y, nz);
    grad->z0 = Mat::Zero(nz, data.slots());
    grad->v.clear();
    for (const auto& levels : vars.v) {
      grad->v.push_back(Vec::Zero(levels.size()));
    }
  }
  if (cfg.w_mono > 0.0) {
    for (int k = 0; k < data.n_u; ++k) {
      mono += mono_penalty_grad(vars.v[k], grad != nullptr ? &grad->v[k] : nullptr, cfg.w_mono);
    }
  }
  if (sym != nullptr && cfg.w_sym_psi > 0.0) {
    psym = psi_symmetry_grad(vars.v, data.channels, *sym, grad != nullptr ? &grad->v : nullptr, cfg.w_sym_psi);
  }
  out.theta = cfg.w_mono * mono + cfg.w_sym_psi * psym;
  out.total = out.fit + out.endpoint + out.theta;
  if (!std::isfinite(out.total)) {
    throw NumericError("loss is not finite");
  }
  if (grad == nullptr) {
    return out;
  }

  // Backward pass: lambda_t is the gradient of the loss with respect to z_t.
  Mat lambda = 2.0 * (vars.c.transpose() * r[h]) + 2.0 * cfg.w0 * end_err;
  for (int t = h - 1; t >= 0; --t) {
    grad->a.noalias() += lambda * z[t].transpose();
    grad->b.noalias() += lambda * v[t].transpose();
    const Mat gv = vars.b.transpose() * lambda;
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < data.n_u; ++k) {
        grad->v[k](data.sel[t](k, i)) += gv(k, i);
      }
    }
    Mat next = 2.0 * (vars.c.transpose() * r[t]);
    next.noalias() += vars.a.transpose() * lambda;
    lambda = std::move(next);
  }
  for (int t = 0; t <= h; ++t) {
    grad->c.noalias() += 2.0 * r[t] * z[t].transpose();
  }
  for (int i = 0; i < n; ++i) {
    grad->z0.col(data.slot_of[i]) += lambda.col(i);
  }
  for (std::size_t l = 0; l < data.links.size(); ++l) {
    grad->z0.col(data.links[l].second) -= 2.0 * cfg.w0 * link_err[l];
  }
  mask_gradient(*grad, sym);
  const bool finite = grad->a.allFinite() && grad->b.allFinite() && grad->c.allFinite() &&
                      grad->z0.allFinite() &&
                      std::all_of(grad->v.begin(), grad->v.end(), [](const Vec& g) { return g.allFinite(); });
  if (!finite) {
    throw NumericError("gradient is not finite");
  }
  return out;
}

}  // namespace

double mono_penalty(const Vec& levels) { return mono_penalty_grad(levels, nullptr, 0.0); }

double psi_symmetry_penalty(const std::vector<Vec>& v, const std::vector<QuantizedChannel>& u,
                            const SymmetryStructure& sym) {
  return psi_symmetry_grad(v, u, sym, nullptr, 0.0);
}

LossBreakdown loss(const DecisionVars& vars, const TrainingData& data, const LearnConfig& cfg,
                   const SymmetryStructure* sym) {
  return evaluate(vars, data, cfg, sym, nullptr);
}

LossBreakdown loss_and_gradients(const DecisionVars& vars, const TrainingData& data, const LearnConfig& cfg,
                                 const SymmetryStructure* sym, DecisionVars& grad) {
  return evaluate(vars, data, cfg, sym, &grad);
}

AdamState make_adam_state(const DecisionVars& like) {
  AdamState st;
  st.m.a = Mat::Zero(like.a.rows(), like.a.cols());
  st.m.b = Mat::Zero(like.b.rows(), like.b.cols());
  st.m.c = Mat::Zero(like.c.rows(), like.c.cols());
  st.m.z0 = Mat::Zero(like.z0.rows(), like.z0.cols());
  for (const auto& v : like.v) {
    st.m.v.push_back(Vec::Zero(v.size()));
  }
  st.s = st.m;
  return st;
}

namespace {

template <typename Derived>
void adam_update(Eigen::MatrixBase<Derived>& x, Eigen::MatrixBase<Derived>& m, Eigen::MatrixBase<Derived>& s,
                 const Eigen::MatrixBase<Derived>& g, const AdamConfig& cfg, double c1, double c2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  s = cfg.beta2 * s + (1.0 - cfg.beta2) * g.cwiseAbs2();
  x -= (cfg.alpha * (m / c1).array() / ((s / c2).array().sqrt() + cfg.eps)).matrix();
}

}  // namespace

void adam_step(DecisionVars& vars, AdamState& state, const DecisionVars& grad, const AdamConfig& cfg,
               bool freeze_v, const SymmetryStructure* sym) {
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  adam_update(vars.a, state.m.a, state.s.a, grad.a, cfg, c1, c2);
  adam_update(vars.b, state.m.b, state.s.b, grad.b, cfg, c1, c2);
  adam_update(vars.c, state.m.c, state.s.c, grad.c, cfg, c1, c2);
  adam_update(vars.z0, state.m.z0, state.s.z0, grad.z0, cfg, c1, c2);
  for (std::size_t k = 0; k < vars.v.size(); ++k) {
    const Vec g = freeze_v ? Vec::Zero(grad.v[k].size()) : grad.v[k];
    adam_update(vars.v[k], state.m.v[k], state.s.v[k], g, cfg, c1, c2);
  }
  if (sym != nullptr) {
    apply_masks(*sym, vars.a, vars.b, vars.c);
  }
}

KoopmanPredictor assemble_predictor(const DecisionVars& vars, const TrainingData& data, double ts,
                                    const SymmetryStructure* sym) {
  KoopmanPredictor p;
  p.a = vars.a;
  p.b = vars.b;
  p.c = vars.c;
  p.ts = ts;
  p.u_channels = data.channels;
  for (const auto& levels : vars.v) {
    p.v_channels.push_back({std::vector<double>(levels.data(), levels.data() + levels.size())});
  }
  std::vector<PhiSample> samples;
  samples.reserve(data.slot_x.size());
  for (int s = 0; s < data.slots(); ++s) {
    samples.push_back({data.slot_x[s], vars.z0.col(s)});
  }
  if (sym != nullptr) {
    p.structure = *sym;
    if (!sym->trivial()) {
      samples = augment_symmetric(samples, *sym);
    }
  }
  p.phi_samples = std::move(samples);
  return p;
}

TrainResult train(const Dataset& ds, const LearnConfig& cfg, const SymmetryStructure* sym,
                  const TrainObserver& observer) {
  cfg.validate();
  const TrainingData data = prepare_training_data(ds);
  TrainResult result;
  result.vars = init_variables(cfg, data, sym);
  AdamState state = make_adam_state(result.vars);
  DecisionVars grad;
  result.history.reserve(static_cast<std::size_t>(cfg.iters) + 1);
  for (int it = 0; it <= cfg.iters; ++it) {
    try {
      result.history.push_back(it < cfg.iters ? loss_and_gradients(result.vars, data, cfg, sym, grad)
                                              : loss(result.vars, data, cfg, sym));
    } catch (const NumericError& e) {
      throw TrainingDiverged("training diverged at iteration " + std::to_string(it) + ": " + e.what(),
                             std::move(result.history));
    }
    if (it == cfg.iters) {
      break;
    }
    adam_step(result.vars, state, grad, cfg.adam, it < cfg.v_freeze_iters, sym);
    if (observer) {
      observer(it + 1, result.vars);
    }
  }
  result.predictor = assemble_predictor(result.vars, data, ds.ts, sym);
  return result;
}

}  // namespace dfkoop
