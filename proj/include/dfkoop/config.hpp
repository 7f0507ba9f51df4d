#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfkoop/dataset.hpp"
#include "dfkoop/edmd.hpp"
#include "dfkoop/learner.hpp"
#include "dfkoop/mpc.hpp"
#include "dfkoop/symmetry.hpp"

namespace dfkoop {

struct ChannelSpec {
  /// Either equidistant level counts or explicit level lists.
  std::vector<int> counts;
  std::vector<std::vector<double>> levels;

  [[nodiscard]] std::vector<QuantizedChannel> build() const;
};

struct SymmetrySpec {
  std::vector<SignVector> gamma_x_generators;
  std::vector<SignVector> gamma_u_generators;
  std::vector<int> block_sizes;
};

enum class WeightUnits { Lifted, Original };

/// MPC settings as written in the config; weights in original units and
/// automatic v bounds are resolved against a predictor by resolve().
struct MpcSpec {
  MpcConfig base;
  WeightUnits r_units = WeightUnits::Lifted;
  bool v_bounds_auto = false;
  /// k for static lookup; unset means choose it from the dataset.
  std::optional<int> knn_k;
  bool preview = false;
  bool log_timing = false;
  Vec x_init;
  std::vector<RefSegment> schedule;

  [[nodiscard]] MpcConfig resolve(const KoopmanPredictor& p) const;
};

enum class EvalInput { Zero, Random };

struct EvalSpec {
  int horizon = 0;
  std::vector<Vec> initial_states;
  EvalInput input = EvalInput::Zero;
  std::uint64_t seed = 0;
  int knn_k = 1;
};

struct ExperimentConfig {
  std::string system;
  double ts = 0.0;
  GenerateConfig dataset;
  ChannelSpec channels;
  LearnConfig learn;
  std::optional<SymmetrySpec> symmetry;
  EdmdConfig edmd;
  std::optional<MpcSpec> mpc;
  EvalSpec eval;

  /// Applies a seed override to every seeded stage.
  void override_seed(std::uint64_t seed);
  [[nodiscard]] std::optional<SymmetryStructure> structure() const;
};

/// Parses JSON text (comments allowed). Errors name the offending key path,
/// e.g. "config: learn.adam.alpha: expected a number".
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& file);

}  // namespace dfkoop
