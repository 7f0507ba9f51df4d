#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dfkoop/dataset.hpp"
#include "dfkoop/error.hpp"
#include "dfkoop/predictor.hpp"
#include "dfkoop/symmetry.hpp"
#include "dfkoop/types.hpp"

namespace dfkoop {

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LearnConfig {
  int n_z = 1;
  int iters = 1000;
  /// V receives zero gradient during the first v_freeze_iters iterations.
  int v_freeze_iters = 500;
  double w0 = 1.0;
  double w_mono = 0.0;
  double w_sym_psi = 0.0;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Free entries and lifted initial states start uniform on [-init_range, init_range].
  double init_range = 0.5;
  /// Rescale the initial A to spectral radius below one.
  bool stabilize_a = false;

  void validate() const;
};

/// A, B, C, one lifted initial state per distinct initial state (columns of
/// z0), and the lifted channel levels. Also used for gradients.
struct DecisionVars {
  Mat a;
  Mat b;
  Mat c;
  Mat z0;
  std::vector<Vec> v;
};

struct LossBreakdown {
  double fit = 0.0;
  double endpoint = 0.0;
  double theta = 0.0;
  double total = 0.0;
};

/// Dataset rearranged for batched rollouts: all trajectories advance together
/// as the columns of one n_z x N matrix. Trajectories whose initial states are
/// bit-identical share one lifted initial state ("slot").
struct TrainingData {
  int n_x = 0;
  int n_u = 0;
  int n_y = 0;
  int horizon = 0;
  std::vector<QuantizedChannel> channels;
  std::vector<int> slot_of;
  std::vector<Vec> slot_x;
  /// Per step t: outputs (n_y x N) and selected level per channel (n_u x N).
  std::vector<Mat> y;
  std::vector<Eigen::MatrixXi> sel;
  /// (trajectory index a, slot of its successor b) for every successor pair.
  std::vector<std::pair<int, int>> links;

  [[nodiscard]] int count() const { return static_cast<int>(slot_of.size()); }
  [[nodiscard]] int slots() const { return static_cast<int>(slot_x.size()); }
};

TrainingData prepare_training_data(const Dataset& ds);

/// Uniform initialization of the free entries; V starts equal to U.
DecisionVars init_variables(const LearnConfig& cfg, const TrainingData& data, const SymmetryStructure* sym);

/// (|v_q - v_1| - sum_i |v_{i+1} - v_i|)^2, zero exactly when the levels are monotone.
double mono_penalty(const Vec& levels);
/// Sum over channels flipped by some group element of sum_j (V_k[j] + V_k[mirror(j)])^2.
double psi_symmetry_penalty(const std::vector<Vec>& v, const std::vector<QuantizedChannel>& u,
                            const SymmetryStructure& sym);

LossBreakdown loss(const DecisionVars& vars, const TrainingData& data, const LearnConfig& cfg,
                   const SymmetryStructure* sym);

/// Loss and its gradient by the adjoint recursion; masked entries of the
/// gradient are zero.
LossBreakdown loss_and_gradients(const DecisionVars& vars, const TrainingData& data, const LearnConfig& cfg,
                                 const SymmetryStructure* sym, DecisionVars& grad);

struct AdamState {
  DecisionVars m;
  DecisionVars s;
  long long step = 0;
};

AdamState make_adam_state(const DecisionVars& like);

/// One bias-corrected ADAM update. With freeze_v the V gradient counts as zero.
void adam_step(DecisionVars& vars, AdamState& state, const DecisionVars& grad, const AdamConfig& cfg,
               bool freeze_v, const SymmetryStructure* sym);

struct TrainResult {
  KoopmanPredictor predictor;
  DecisionVars vars;
  /// Entry i is the loss after i updates; iters + 1 entries.
  std::vector<LossBreakdown> history;
};

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, std::vector<LossBreakdown> history)
      : NumericError(what), history_(std::move(history)) {}
  [[nodiscard]] const std::vector<LossBreakdown>& history() const { return history_; }

 private:
  std::vector<LossBreakdown> history_;
};

/// Called after every update with the iteration count and current variables.
using TrainObserver = std::function<void(int, const DecisionVars&)>;

TrainResult train(const Dataset& ds, const LearnConfig& cfg, const SymmetryStructure* sym = nullptr,
                  const TrainObserver& observer = {});

/// Predictor from learned variables; symmetric aliases of the lifted samples
/// are added when a non-trivial structure is given.
KoopmanPredictor assemble_predictor(const DecisionVars& vars, const TrainingData& data, double ts,
                                    const SymmetryStructure* sym);

}  // namespace dfkoop
