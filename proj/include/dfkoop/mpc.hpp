#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfkoop/predictor.hpp"
#include "dfkoop/qp.hpp"
#include "dfkoop/systems.hpp"
#include "dfkoop/types.hpp"

namespace dfkoop {

/// Tracking MPC over the lifted inputs v_0 .. v_{H-1} and outputs y_1 .. y_H.
/// Empty bound vectors mean unbounded; individual entries may be +-infinity.
struct MpcConfig {
  int horizon = 20;
  Mat q;
  /// Weights on the lifted input and its increments.
  Mat r;
  Mat r_d;
  Vec y_lo;
  Vec y_hi;
  Vec v_lo;
  Vec v_hi;
  Vec dv_lo;
  Vec dv_hi;
  /// Decay of the lifting-error output disturbance; unset disables it.
  std::optional<double> zeta;
  KnnMode knn_mode = KnnMode::Static;
  /// Neighbour count in static mode.
  int knn_k = 1;
  std::vector<int> knn_candidates = default_knn_candidates();
  QpSettings qp;

  void validate(int n_y, int n_u) const;
};

/// R_v = R_u ./ (s s') with s_k = (max V_k - min V_k) / 2: an original-input
/// weight expressed for the lifted input.
Mat lifted_input_weight(const Mat& r_u, std::span<const LiftedChannel> v_channels);

enum class RowKind { YUp, YLow, VUp, VLow, DvUp, DvLow };

/// One inequality row of the condensed problem, tied to stage t and coordinate i.
struct ConstraintRow {
  RowKind kind;
  int t;
  int i;
};

/// Condensed problem with Y = M V + C_z, dV = D V + C_v:
///   min 1/2 V' F V + q' V  s.t.  G V <= h,
/// F = M' Q_H M + D' Rd_H D + R_H and q = M' Q_H (C_z - Y_ref) + D' Rd_H C_v.
struct CondensedMpc {
  int horizon = 0;
  int n_y = 0;
  int n_u = 0;
  Mat m;
  /// Rows C A^t for t = 1..H, so C_z = cz_map z0.
  Mat cz_map;
  Mat d;
  Mat q_h;
  Mat r_h;
  Mat rd_h;
  Mat f;
  Mat g;
  std::vector<ConstraintRow> rows;
  Vec y_lo;
  Vec y_hi;
  Vec v_lo;
  Vec v_hi;
  Vec dv_lo;
  Vec dv_hi;

  [[nodiscard]] Vec cz(const Vec& z0) const { return cz_map * z0; }
  [[nodiscard]] Vec cv(const Vec& v_prev) const;
  [[nodiscard]] Vec q_vec(const Vec& z0, const Vec& v_prev, const Vec& y_ref) const;
  [[nodiscard]] Vec h_vec(const Vec& z0, const Vec& v_prev) const;
  /// Sum of the tracking, input and input-rate terms for a candidate V.
  [[nodiscard]] double cost(const Vec& v, const Vec& z0, const Vec& v_prev, const Vec& y_ref) const;
};

CondensedMpc condense(const Mat& a, const Mat& b, const Mat& c, const MpcConfig& cfg);

/// Model with an output disturbance state: A' = diag(A, zeta I), B' = [B; 0], C' = [C I].
struct AugmentedModel {
  Mat a;
  Mat b;
  Mat c;
};

AugmentedModel augment_disturbance(const KoopmanPredictor& p, double zeta);

struct MpcStep {
  Vec u;
  Vec v;
  /// Full optimal lifted input sequence.
  Vec v_plan;
  QpSolution qp;
  /// 1/2 V' F V + q' V at the returned V.
  double predicted_cost = 0.0;
  /// ||g(x0) - C phi_hat(x0)||_Q^2.
  double lifting_error = 0.0;
  int k = 1;
  bool psi_fallback = false;
};

/// Receding-horizon controller holding the condensed matrices, the QP
/// factorization and the warm start.
class KoopmanMpc {
 public:
  KoopmanMpc(KoopmanPredictor predictor, MpcConfig cfg);

  /// y_ref stacks the references for y_1 .. y_H.
  MpcStep step(const Vec& x0, const Vec& y0, const Vec& u_prev, const Vec& y_ref);
  void reset_warm_start() { warm_.reset(); }

  [[nodiscard]] const CondensedMpc& condensed() const { return cond_; }
  [[nodiscard]] const KoopmanPredictor& predictor() const { return p_; }
  [[nodiscard]] const MpcConfig& config() const { return cfg_; }

 private:
  KoopmanPredictor p_;
  MpcConfig cfg_;
  CondensedMpc cond_;
  QpSolver solver_;
  std::optional<QpWarmStart> warm_;
};

struct RefSegment {
  Vec ref;
  int steps = 0;
};

struct RunRow {
  int step = 0;
  double t = 0.0;
  Vec x;
  Vec y_ref;
  Vec u;
  Vec v;
  int qp_iters = 0;
  QpStatus qp_status = QpStatus::Solved;
  double stage_cost = 0.0;
  double solve_ms = 0.0;
  bool psi_fallback = false;
};

struct RunLog {
  std::vector<RunRow> rows;
  /// State after the last applied input.
  Vec final_state;
  bool diverged = false;
  std::string message;
};

/// Lift, solve, invert and apply the first input at every step. The
/// reference over the horizon is the current segment's, or the scheduled
/// future references when preview is set. Timings are recorded only when
/// log_timing is set so that logs stay reproducible.
RunLog closed_loop(const SystemDef& system, KoopmanMpc& controller, const Vec& x_init,
                   std::span<const RefSegment> schedule, bool preview = false, bool log_timing = false);

/// The reference that applies at absolute step k of a schedule (the last one past its end).
const Vec& reference_at(std::span<const RefSegment> schedule, int k);

}  // namespace dfkoop
