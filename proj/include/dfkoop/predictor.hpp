#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dfkoop/dataset.hpp"
#include "dfkoop/rbf.hpp"
#include "dfkoop/symmetry.hpp"
#include "dfkoop/types.hpp"

namespace dfkoop {

/// Lifted LTI predictor z+ = A z + B v, y = C z, with the state lifting given
/// by samples (x0, z0) and the input lifting by per-channel level tables.
///
/// EDMD predictors carry an RBF dictionary instead; phi_hat then evaluates it
/// directly and phi_samples may be empty.
struct KoopmanPredictor {
  Mat a;
  Mat b;
  Mat c;
  std::vector<PhiSample> phi_samples;
  std::vector<QuantizedChannel> u_channels;
  std::vector<LiftedChannel> v_channels;
  double ts = 1.0;
  std::optional<SymmetryStructure> structure;
  std::optional<RbfDictionary> dictionary;

  [[nodiscard]] int n_z() const { return static_cast<int>(a.rows()); }
  [[nodiscard]] int n_u() const { return static_cast<int>(b.cols()); }
  [[nodiscard]] int n_y() const { return static_cast<int>(c.rows()); }
  [[nodiscard]] int n_x() const;
  /// Throws ConfigError on inconsistent dimensions or mask violations.
  void validate() const;
};

struct Rollout {
  std::vector<Vec> z;  // horizon + 1
  std::vector<Vec> y;  // horizon + 1
};

/// Throws NumericError when a value becomes non-finite.
Rollout rollout(const KoopmanPredictor& p, const Vec& z0, std::span<const InputSelector> selectors);
Rollout rollout_lifted(const KoopmanPredictor& p, const Vec& z0, std::span<const Vec> v);

/// Guard added to neighbour distances in the inverse-distance weights.
inline constexpr double kIdwGuard = 1e-12;

/// k-nearest-neighbour inverse-distance interpolation of the lifted samples.
Vec phi_hat(const KoopmanPredictor& p, const Vec& x, int k);

enum class KnnMode { Static, Adaptive };

/// Default candidate neighbour counts {1, ..., 8}.
std::vector<int> default_knn_candidates();

/// argmin over k of sum_i ||y_i - C phi_hat(x_i, k)||_Q^2; ties go to the smaller k.
int select_knn(const KoopmanPredictor& p, std::span<const Vec> states, std::span<const Vec> outputs,
               const Mat& q, std::span<const int> candidates);

/// ||y - C z||_Q^2.
double lifting_error(const KoopmanPredictor& p, const Vec& x, const Vec& y, const Mat& q, int k);

/// Piecewise-linear Psi through the pairs (U_k[j], V_k[j]); u is clamped to
/// the channel range.
Vec psi_eval(const KoopmanPredictor& p, const Vec& u);

struct PsiInverse {
  Vec u;
  /// Set when some channel was decoded by nearest level because its V_k is
  /// not strictly monotone.
  bool fallback = false;
};

PsiInverse psi_invert(const KoopmanPredictor& p, const Vec& v);

double psi_eval_channel(const QuantizedChannel& u, const LiftedChannel& v, double x);
/// Returns the inverse and sets `fallback` when nearest-level decoding was used.
double psi_invert_channel(const QuantizedChannel& u, const LiftedChannel& v, double y, bool& fallback);

/// Largest equivariance defect of (A, B, C) over random probes and all group
/// elements.
double check_equivariance(const KoopmanPredictor& p, const SymmetryStructure& sym, int probes = 16,
                          std::uint64_t seed = 0);

/// log(eig(A)) / ts on the principal branch, sorted by real part then imaginary part.
std::vector<std::complex<double>> continuous_eigenvalues(const Mat& a, double ts, double tol = 1e-14);

}  // namespace dfkoop
