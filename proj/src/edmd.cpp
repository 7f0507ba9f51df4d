#include "dfkoop/edmd.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "dfkoop/error.hpp"
#include "dfkoop/rng.hpp"

namespace dfkoop {

RbfDictionary make_dictionary(const Dataset& ds, const EdmdConfig& cfg) {
  const int centers = cfg.n_z - (cfg.include_state ? ds.n_x : 0);
  if (centers < 0 || cfg.n_z < 1) {
    throw ConfigError("edmd.n_z is smaller than the state dimension");
  }
  RbfDictionary dict;
  dict.state_dim = ds.n_x;
  dict.include_state = cfg.include_state;
  if (cfg.scale_to_unit_box) {
    dict.box_lo = Vec::Constant(ds.n_x, std::numeric_limits<double>::infinity());
    dict.box_hi = -dict.box_lo;
    for (const auto& t : ds.trajectories) {
      for (const auto& x : t.states) {
        dict.box_lo = dict.box_lo.cwiseMin(x);
        dict.box_hi = dict.box_hi.cwiseMax(x);
      }
    }
    for (int i = 0; i < ds.n_x; ++i) {
      if (!(dict.box_hi(i) > dict.box_lo(i))) {
        dict.box_hi(i) = dict.box_lo(i) + 1.0;
      }
    }
  }
  CounterRng rng(cfg.seed);
  for (int j = 0; j < centers; ++j) {
    Vec c(ds.n_x);
    for (int i = 0; i < ds.n_x; ++i) {
      c(i) = rng.uniform(-1.0, 1.0);
    }
    dict.centers.push_back(c);
  }
  return dict;
}

namespace {

/// Solves X G = R for X with G = W W^T + lambda I; returns cond(G).
Mat ridge_solve(const Mat& w, const Mat& rhs_times_wt, double ridge, double& condition) {
  Mat gram = w * w.transpose();
  const double scale = gram.diagonal().mean();
  gram.diagonal().array() += ridge * (scale > 0.0 ? scale : 1.0);
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  condition = std::max(condition, lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
  Eigen::LLT<Mat> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw NumericError("edmd: regression matrix is not positive definite");
  }
  return llt.solve(rhs_times_wt.transpose()).transpose();
}

}  // namespace

EdmdResult edmd_fit(const Dataset& ds, const RbfDictionary& dict, double ridge) {
  dict.validate();
  if (dict.n_x() != ds.n_x) {
    throw ConfigError("edmd: dictionary dimension differs from the dataset state dimension");
  }
  Index pairs = 0;
  Index points = 0;
  for (const auto& t : ds.trajectories) {
    pairs += t.horizon();
    points += static_cast<Index>(t.states.size());
  }
  if (pairs == 0) {
    throw ConfigError("edmd: dataset has no transitions");
  }
  const int nz = dict.size();
  Mat z(nz, pairs);
  Mat zn(nz, pairs);
  Mat u(ds.n_u, pairs);
  Mat zy(nz, points);
  Mat y(ds.n_y, points);
  Index col = 0;
  Index pcol = 0;
  for (const auto& t : ds.trajectories) {
    std::vector<Vec> lifted;
    for (const auto& x : t.states) {
      lifted.push_back(dict.lift(x));
    }
    for (int s = 0; s < t.horizon(); ++s) {
      z.col(col) = lifted[s];
      zn.col(col) = lifted[s + 1];
      u.col(col) = select_input(t.selectors[s], ds.channels);
      ++col;
    }
    for (std::size_t s = 0; s < t.states.size(); ++s) {
      zy.col(pcol) = lifted[s];
      y.col(pcol) = t.outputs[s];
      ++pcol;
    }
  }

  std::vector<Index> active;
  for (Index k = 0; k < ds.n_u; ++k) {
    if (u.row(k).cwiseAbs().maxCoeff() > 0.0) {
      active.push_back(k);
    }
  }
  Mat w(nz + static_cast<Index>(active.size()), pairs);
  w.topRows(nz) = z;
  for (std::size_t j = 0; j < active.size(); ++j) {
    w.row(nz + static_cast<Index>(j)) = u.row(active[j]);
  }

  EdmdResult out;
  const Mat ab = ridge_solve(w, zn * w.transpose(), ridge, out.condition);
  auto& p = out.predictor;
  p.a = ab.leftCols(nz);
  p.b = Mat::Zero(nz, ds.n_u);
  for (std::size_t j = 0; j < active.size(); ++j) {
    p.b.col(active[j]) = ab.col(nz + static_cast<Index>(j));
  }
  p.c = ridge_solve(zy, y * zy.transpose(), ridge, out.condition);
  if (out.condition > 1e15) {
    throw NumericError("edmd: regression is numerically rank deficient (condition " +
                       std::to_string(out.condition) + ")");
  }
  p.u_channels = ds.channels;
  for (const auto& ch : ds.channels) {
    p.v_channels.push_back({ch.levels()});
  }
  p.ts = ds.ts;
  p.dictionary = dict;
  return out;
}

EdmdResult edmd_fit(const Dataset& ds, const EdmdConfig& cfg) {
  return edmd_fit(ds, make_dictionary(ds, cfg), cfg.ridge);
}

}  // namespace dfkoop
