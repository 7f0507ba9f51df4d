#pragma once

#include <string>

#include <Eigen/Cholesky>

#include "dfkoop/types.hpp"

namespace dfkoop {

/// min 1/2 v' F v + q' v  subject to  G v <= h, with F symmetric positive definite.
struct QpProblem {
  Mat f;
  Vec q;
  Mat g;
  Vec h;
};

enum class QpStatus { Solved, MaxIter, InfeasibleSuspected };

std::string to_string(QpStatus s);

struct QpSettings {
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  /// Iterations between penalty updates; the matrix is refactored only when
  /// the proposed penalty differs by more than this factor.
  int adaptive_rho_interval = 25;
  double adaptive_rho_tolerance = 5.0;
  double eps_infeasible = 1e-9;
  /// Refine the ADMM iterate by solving the KKT system on its active set.
  bool polish = true;
};

struct QpWarmStart {
  Vec x;
  Vec y;
};

struct QpSolution {
  Vec v_star;
  /// Multipliers of G v <= h, non-negative.
  Vec mu;
  QpStatus status = QpStatus::MaxIter;
  double primal_res = 0.0;
  double dual_res = 0.0;
  int iterations = 0;
  bool polished = false;
  double objective = 0.0;
};

/// ADMM solver for a fixed (F, G) pair; q and h change between solves, which
/// matches the receding-horizon use where only the linear terms move.
class QpSolver {
 public:
  /// Throws ConfigError when F is not symmetric or sizes disagree, NumericError
  /// when F is not positive definite.
  QpSolver(Mat f, Mat g, QpSettings settings = {});

  QpSolution solve(const Vec& q, const Vec& h, const QpWarmStart* warm = nullptr);

  [[nodiscard]] double rho() const { return rho_; }
  [[nodiscard]] const Mat& f() const { return f_; }
  [[nodiscard]] const Mat& g() const { return g_; }

 private:
  void factor();
  void polish(const Vec& q, const Vec& h, const Vec& y, QpSolution& sol) const;

  Mat f_;
  Mat g_;
  QpSettings s_;
  double rho_;
  Eigen::LLT<Mat> f_llt_;
  Eigen::LLT<Mat> kkt_;
};

QpSolution solve_qp(const QpProblem& p, const QpSettings& settings = {}, const QpWarmStart* warm = nullptr);

}  // namespace dfkoop
