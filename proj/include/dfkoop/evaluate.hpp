#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dfkoop/dataset.hpp"
#include "dfkoop/predictor.hpp"
#include "dfkoop/systems.hpp"

namespace dfkoop {

/// True and predicted outputs for t = 0 .. horizon.
struct OpenLoopCase {
  int id = 0;
  std::vector<Vec> y_true;
  std::vector<Vec> y_pred;
};

/// Predicts from phi_hat(x0, k) under the given selectors.
OpenLoopCase predict_open_loop(const KoopmanPredictor& p, const Vec& x0, std::span<const InputSelector> selectors,
                               std::vector<Vec> y_true, int k);

/// Horizons up to the dataset's evaluate every trajectory on its first
/// `horizon` steps. Longer horizons follow successor chains from every
/// trajectory that has no predecessor, truncated to `horizon` steps or to
/// the end of the chain.
std::vector<OpenLoopCase> evaluate_on_dataset(const KoopmanPredictor& p, const Dataset& ds, int horizon, int k);

/// Simulates the system from each initial state under zero input (the level
/// nearest 0 on every channel) or random selectors drawn from the seed.
std::vector<OpenLoopCase> evaluate_from_states(const KoopmanPredictor& p, const SystemDef& system,
                                               std::span<const Vec> initial_states, int horizon, bool random_input,
                                               std::uint64_t seed, int k);

/// Root-mean-square error per output over all cases and steps.
Vec output_rmse(std::span<const OpenLoopCase> cases);

}  // namespace dfkoop
