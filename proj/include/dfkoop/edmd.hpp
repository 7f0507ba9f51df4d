#pragma once

#include <cstdint>

#include "dfkoop/dataset.hpp"
#include "dfkoop/predictor.hpp"
#include "dfkoop/rbf.hpp"

namespace dfkoop {

struct EdmdConfig {
  /// Total lifted dimension; the RBF count is n_z - n_x when the state is included.
  int n_z = 10;
  bool include_state = true;
  /// Scale states to [-1, 1]^n_x using the data's bounding box.
  bool scale_to_unit_box = true;
  /// Relative Tikhonov term, multiplied by the mean diagonal of the Gram matrix.
  double ridge = 1e-9;
  std::uint64_t seed = 0;
};

/// Centers uniform in [-1, 1]^n_x drawn from the seed, optional bounding-box scaling.
RbfDictionary make_dictionary(const Dataset& ds, const EdmdConfig& cfg);

struct EdmdResult {
  KoopmanPredictor predictor;
  /// Condition number of the regularized regression Gram matrix.
  double condition = 0.0;
};

/// Least-squares fit of z+ = A z + B u and y = C z over all one-step pairs of
/// the dataset with z = dict.lift(x). Inputs enter unlifted (V = U); input
/// columns that are zero throughout the data get a zero column in B.
EdmdResult edmd_fit(const Dataset& ds, const RbfDictionary& dict, double ridge = 1e-9);

EdmdResult edmd_fit(const Dataset& ds, const EdmdConfig& cfg);

}  // namespace dfkoop
