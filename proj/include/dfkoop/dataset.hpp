#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dfkoop/symmetry.hpp"
#include "dfkoop/systems.hpp"
#include "dfkoop/types.hpp"

namespace dfkoop {

/// One quantized input channel U_k: strictly increasing levels within [-1, 1].
class QuantizedChannel {
 public:
  explicit QuantizedChannel(std::vector<double> levels);

  /// q levels evenly spaced with endpoints at -1 and 1; a single level sits at 0.
  static QuantizedChannel equidistant(int count);

  [[nodiscard]] const std::vector<double>& levels() const { return levels_; }
  [[nodiscard]] int size() const { return static_cast<int>(levels_.size()); }
  [[nodiscard]] double operator[](int j) const { return levels_[j]; }
  /// Index of the level equal to -levels()[j], or -1.
  [[nodiscard]] int mirror_index(int j) const;

  friend bool operator==(const QuantizedChannel&, const QuantizedChannel&) = default;

 private:
  std::vector<double> levels_;
};

/// Lifted channel V_k: same count as its U_k, no ordering or range constraint.
struct LiftedChannel {
  std::vector<double> levels;

  [[nodiscard]] int size() const { return static_cast<int>(levels.size()); }
  [[nodiscard]] double min() const;
  [[nodiscard]] double max() const;
  /// Strictly increasing or strictly decreasing.
  [[nodiscard]] bool strictly_monotone() const;

  friend bool operator==(const LiftedChannel&, const LiftedChannel&) = default;
};

std::vector<QuantizedChannel> make_channels(std::span<const int> level_counts);
std::vector<QuantizedChannel> make_channels(const std::vector<std::vector<double>>& explicit_levels);

/// Picks one level per channel. Decoding the same selector against U and V
/// yields the paired (u, v).
struct InputSelector {
  std::vector<int> idx;

  friend bool operator==(const InputSelector&, const InputSelector&) = default;
};

Vec select_input(const InputSelector& sel, std::span<const QuantizedChannel> channels);
Vec select_input(const InputSelector& sel, std::span<const LiftedChannel> channels);

/// Block-diagonal one-hot matrix L with u = L [U_1; ...; U_n].
Mat projection_matrix(const InputSelector& sel, std::span<const QuantizedChannel> channels);
/// [U_1; ...; U_n] stacked.
Vec stacked_levels(std::span<const QuantizedChannel> channels);
Vec stacked_levels(std::span<const LiftedChannel> channels);

struct Trajectory {
  int id = 0;
  std::vector<Vec> states;               // H_T + 1
  std::vector<InputSelector> selectors;  // H_T
  std::vector<Vec> outputs;              // H_T + 1

  [[nodiscard]] int horizon() const { return static_cast<int>(selectors.size()); }
};

using IdPair = std::pair<int, int>;

struct Dataset {
  std::string system;
  int n_x = 0;
  int n_u = 0;
  int n_y = 0;
  double ts = 0.0;
  int horizon = 0;
  std::uint64_t seed = 0;
  std::vector<QuantizedChannel> channels;
  std::vector<Trajectory> trajectories;
  /// Consecutive pieces of one long run: end of a == start of b, bit-exact.
  std::vector<IdPair> successors;
  /// Same initial state, different first input.
  std::vector<IdPair> sep_pairs;

  [[nodiscard]] const Trajectory& by_id(int id) const;
  /// Throws ConfigError describing the first violated invariant.
  void validate() const;
};

enum class InitialSampling { Uniform, Grid };

struct GenerateConfig {
  int n_long = 1;
  int split = 1;
  int horizon = 1;
  /// Control-separation siblings per long run. Each sibling is one piece of
  /// length `horizon` started from the run's initial state.
  int siblings = 1;
  /// Attach siblings to every piece of a run instead of only its first one.
  bool siblings_per_piece = false;
  /// Steps each randomly drawn selector is held.
  int hold_steps = 1;
  /// A run is rejected when fewer than this fraction of its states are feasible.
  double feasible_fraction = 0.7;
  int max_attempts = 100;
  InitialSampling initial = InitialSampling::Uniform;
  /// Box for initial states; empty means the system's state box.
  std::vector<Interval> initial_box;
  std::uint64_t seed = 0;
};

using FeasibilityPredicate = std::function<bool(const Vec&)>;

/// Long runs of length split * horizon are simulated under piecewise-constant
/// random selectors and cut into `split` pieces. Ids are 1-based: each long run
/// contributes its pieces followed by its siblings.
Dataset generate_dataset(const SystemDef& system, std::vector<QuantizedChannel> channels,
                         const GenerateConfig& cfg, FeasibilityPredicate feasible = {});

/// Number of sep_pairs whose first outputs coincide (the separation lemma needs none).
int count_unseparated_pairs(const Dataset& ds);

/// Initial state and its lifted value.
struct PhiSample {
  Vec x;
  Vec z;
};

/// Every sample mapped through every group element: (gamma_x x, gamma_z z).
/// The result has order() * samples.size() entries, identity copies first per sample.
std::vector<PhiSample> augment_symmetric(std::span<const PhiSample> samples, const SymmetryStructure& sym);

/// Image of a trajectory under group element g: states and outputs are flipped by
/// gamma_x, selectors are mirrored on channels flipped by gamma_u.
Trajectory symmetrize_trajectory(const Trajectory& traj, const SymmetryStructure& sym, int g,
                                 std::span<const QuantizedChannel> channels);

}  // namespace dfkoop
