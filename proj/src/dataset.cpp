#include "dfkoop/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dfkoop/error.hpp"
#include "dfkoop/rng.hpp"

namespace dfkoop {

QuantizedChannel::QuantizedChannel(std::vector<double> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) {
    throw ConfigError("channel needs at least one level");
  }
  for (std::size_t j = 0; j < levels_.size(); ++j) {
    if (!(levels_[j] >= -1.0 && levels_[j] <= 1.0)) {
      throw ConfigError("channel level " + std::to_string(levels_[j]) + " outside [-1, 1]");
    }
    if (j > 0 && !(levels_[j] > levels_[j - 1])) {
      throw ConfigError("channel levels must be strictly increasing");
    }
  }
}

QuantizedChannel QuantizedChannel::equidistant(int count) {
  if (count < 1) {
    throw ConfigError("channel needs at least one level");
  }
  if (count == 1) {
    return QuantizedChannel({0.0});
  }
  std::vector<double> levels(count);
  // (2j - (q-1)) / (q-1) keeps the grid exactly symmetric about zero.
  const double span = static_cast<double>(count - 1);
  for (int j = 0; j < count; ++j) {
    levels[j] = static_cast<double>(2 * j - (count - 1)) / span;
  }
  return QuantizedChannel(std::move(levels));
}

int QuantizedChannel::mirror_index(int j) const {
  const double target = -levels_.at(j);
  for (int i = 0; i < size(); ++i) {
    if (levels_[i] == target) {
      return i;
    }
  }
  return -1;
}

double LiftedChannel::min() const { return *std::min_element(levels.begin(), levels.end()); }
double LiftedChannel::max() const { return *std::max_element(levels.begin(), levels.end()); }

bool LiftedChannel::strictly_monotone() const {
  bool up = true;
  bool down = true;
  for (std::size_t j = 1; j < levels.size(); ++j) {
    up = up && levels[j] > levels[j - 1];
    down = down && levels[j] < levels[j - 1];
  }
  return up || down;
}

std::vector<QuantizedChannel> make_channels(std::span<const int> level_counts) {
  std::vector<QuantizedChannel> out;
  out.reserve(level_counts.size());
  for (int q : level_counts) {
    out.push_back(QuantizedChannel::equidistant(q));
  }
  return out;
}

std::vector<QuantizedChannel> make_channels(const std::vector<std::vector<double>>& explicit_levels) {
  std::vector<QuantizedChannel> out;
  out.reserve(explicit_levels.size());
  for (const auto& levels : explicit_levels) {
    out.emplace_back(levels);
  }
  return out;
}

namespace {

template <typename Channel>
Vec decode(const InputSelector& sel, std::span<const Channel> channels) {
  if (sel.idx.size() != channels.size()) {
    throw ConfigError("selector has " + std::to_string(sel.idx.size()) + " entries for " +
                      std::to_string(channels.size()) + " channels");
  }
  Vec out(static_cast<Index>(channels.size()));
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const int j = sel.idx[k];
    if (j < 0 || j >= channels[k].size()) {
      throw ConfigError("selector index " + std::to_string(j) + " out of range for channel " +
                        std::to_string(k));
    }
    if constexpr (std::is_same_v<Channel, QuantizedChannel>) {
      out(static_cast<Index>(k)) = channels[k][j];
    } else {
      out(static_cast<Index>(k)) = channels[k].levels[j];
    }
  }
  return out;
}

}  // namespace

Vec select_input(const InputSelector& sel, std::span<const QuantizedChannel> channels) {
  return decode(sel, channels);
}

Vec select_input(const InputSelector& sel, std::span<const LiftedChannel> channels) {
  return decode(sel, channels);
}

Mat projection_matrix(const InputSelector& sel, std::span<const QuantizedChannel> channels) {
  decode(sel, channels);  // range checks
  Index total = 0;
  for (const auto& ch : channels) {
    total += ch.size();
  }
  Mat l = Mat::Zero(static_cast<Index>(channels.size()), total);
  Index offset = 0;
  for (std::size_t k = 0; k < channels.size(); ++k) {
    l(static_cast<Index>(k), offset + sel.idx[k]) = 1.0;
    offset += channels[k].size();
  }
  return l;
}

Vec stacked_levels(std::span<const QuantizedChannel> channels) {
  std::vector<double> all;
  for (const auto& ch : channels) {
    all.insert(all.end(), ch.levels().begin(), ch.levels().end());
  }
  return Eigen::Map<const Vec>(all.data(), static_cast<Index>(all.size()));
}

Vec stacked_levels(std::span<const LiftedChannel> channels) {
  std::vector<double> all;
  for (const auto& ch : channels) {
    all.insert(all.end(), ch.levels.begin(), ch.levels.end());
  }
  return Eigen::Map<const Vec>(all.data(), static_cast<Index>(all.size()));
}

const Trajectory& Dataset::by_id(int id) const {
  if (id >= 1 && id <= static_cast<int>(trajectories.size()) && trajectories[id - 1].id == id) {
    return trajectories[id - 1];
  }
  for (const auto& t : trajectories) {
    if (t.id == id) {
      return t;
    }
  }
  throw ConfigError("dataset has no trajectory with id " + std::to_string(id));
}

void Dataset::validate() const {
  if (static_cast<int>(channels.size()) != n_u) {
    throw ConfigError("dataset: channel count differs from n_u");
  }
  for (const auto& t : trajectories) {
    const std::string where = "dataset: trajectory " + std::to_string(t.id);
    if (t.horizon() != horizon || static_cast<int>(t.states.size()) != horizon + 1 ||
        static_cast<int>(t.outputs.size()) != horizon + 1) {
      throw ConfigError(where + " has inconsistent lengths");
    }
    for (const auto& x : t.states) {
      if (x.size() != n_x || !x.allFinite()) {
        throw ConfigError(where + " has a malformed state");
      }
    }
    for (const auto& y : t.outputs) {
      if (y.size() != n_y) {
        throw ConfigError(where + " has a malformed output");
      }
    }
    for (const auto& s : t.selectors) {
      select_input(s, channels);
    }
  }
  for (const auto& [a, b] : successors) {
    if (by_id(a).states.back() != by_id(b).states.front()) {
      throw ConfigError("dataset: successor pair (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") does not share its endpoint");
    }
  }
  for (const auto& [a, b] : sep_pairs) {
    const auto& ta = by_id(a);
    const auto& tb = by_id(b);
    if (ta.states.front() != tb.states.front()) {
      throw ConfigError("dataset: separation pair (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") starts from different states");
    }
    if (select_input(ta.selectors.front(), channels) == select_input(tb.selectors.front(), channels)) {
      throw ConfigError("dataset: separation pair (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") shares its first input");
    }
  }
}

namespace {

constexpr std::uint64_t kPurposeInit = 0;
constexpr std::uint64_t kPurposeMain = 1;
constexpr std::uint64_t kPurposeSibling = 2;

InputSelector draw_selector(CounterRng& rng, std::span<const QuantizedChannel> channels) {
  InputSelector sel;
  sel.idx.reserve(channels.size());
  for (const auto& ch : channels) {
    sel.idx.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(ch.size()))));
  }
  return sel;
}

int grid_per_axis(int n, int dims) {
  int m = 1;
  while (true) {
    long long total = 1;
    for (int d = 0; d < dims; ++d) {
      total *= m;
    }
    if (total >= n) {
      return m;
    }
    ++m;
  }
}

Vec grid_point(int index, int n, const std::vector<Interval>& box) {
  const int dims = static_cast<int>(box.size());
  const int m = grid_per_axis(n, dims);
  Vec x(dims);
  int rest = index;
  for (int d = 0; d < dims; ++d) {
    const int digit = rest % m;
    rest /= m;
    x(d) = box[d].lo + (static_cast<double>(digit) + 0.5) * box[d].width() / m;
  }
  return x;
}

struct Simulated {
  std::vector<Vec> states;
  std::vector<InputSelector> selectors;
};

/// Simulates `steps` steps from x0; returns false on integration failure or
/// too many infeasible states.
bool simulate(const SystemDef& system, std::span<const QuantizedChannel> channels, const Vec& x0,
              int steps, int hold, CounterRng& rng, const InputSelector* must_differ,
              const FeasibilityPredicate& feasible, double fraction, Simulated& out) {
  out.states.assign(1, x0);
  out.selectors.clear();
  out.states.reserve(steps + 1);
  out.selectors.reserve(steps);
  InputSelector current;
  for (int s = 0; s < steps; ++s) {
    if (s % hold == 0) {
      current = draw_selector(rng, channels);
      if (s == 0 && must_differ != nullptr) {
        while (select_input(current, channels) == select_input(*must_differ, channels)) {
          current = draw_selector(rng, channels);
        }
      }
    }
    out.selectors.push_back(current);
    try {
      out.states.push_back(system.step(out.states.back(), select_input(current, channels)));
    } catch (const IntegrationError&) {
      return false;
    }
  }
  const auto ok = std::count_if(out.states.begin(), out.states.end(), feasible);
  return static_cast<double>(ok) >= fraction * static_cast<double>(out.states.size());
}

Trajectory make_piece(const SystemDef& system, int id, const Simulated& sim, int begin, int horizon) {
  Trajectory t;
  t.id = id;
  t.states.assign(sim.states.begin() + begin, sim.states.begin() + begin + horizon + 1);
  t.selectors.assign(sim.selectors.begin() + begin, sim.selectors.begin() + begin + horizon);
  t.outputs.reserve(t.states.size());
  for (const auto& x : t.states) {
    t.outputs.push_back(system.observe(x));
  }
  return t;
}

}  // namespace

Dataset generate_dataset(const SystemDef& system, std::vector<QuantizedChannel> channels,
                         const GenerateConfig& cfg, FeasibilityPredicate feasible) {
  if (cfg.n_long < 1 || cfg.split < 1 || cfg.horizon < 1 || cfg.siblings < 0 || cfg.hold_steps < 1 ||
      cfg.max_attempts < 1) {
    throw ConfigError("generate_dataset: counts must be positive (siblings non-negative)");
  }
  if (static_cast<int>(channels.size()) != system.n_u) {
    throw ConfigError("generate_dataset: need one channel per input");
  }
  if (cfg.siblings > 0) {
    const bool any_choice =
        std::any_of(channels.begin(), channels.end(), [](const auto& ch) { return ch.size() > 1; });
    if (!any_choice) {
      throw ConfigError("generate_dataset: control separation needs a channel with two or more levels");
    }
  }
  const std::vector<Interval>& box = cfg.initial_box.empty() ? system.state_bounds : cfg.initial_box;
  if (static_cast<int>(box.size()) != system.n_x) {
    throw ConfigError("generate_dataset: initial box has the wrong dimension");
  }
  if (!feasible) {
    feasible = [&system](const Vec& x) { return system.in_state_box(x); };
  }

  Dataset ds;
  ds.system = system.name;
  ds.n_x = system.n_x;
  ds.n_u = system.n_u;
  ds.n_y = system.n_y;
  ds.ts = system.ts;
  ds.horizon = cfg.horizon;
  ds.seed = cfg.seed;
  ds.channels = std::move(channels);

  const int run_length = cfg.split * cfg.horizon;
  const int anchors = cfg.siblings_per_piece ? cfg.split : 1;
  const int per_run = cfg.split + anchors * cfg.siblings;
  Simulated run;
  std::vector<std::vector<Simulated>> siblings(static_cast<std::size_t>(anchors),
                                               std::vector<Simulated>(static_cast<std::size_t>(cfg.siblings)));
  for (int j = 0; j < cfg.n_long; ++j) {
    // A run is accepted together with its siblings; a sibling that cannot be
    // made feasible from the run's states rejects the whole run.
    bool accepted = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !accepted; ++attempt) {
      Vec x0(system.n_x);
      if (cfg.initial == InitialSampling::Grid) {
        x0 = grid_point(j, cfg.n_long, box);
      } else {
        CounterRng init = CounterRng::derive(cfg.seed, {kPurposeInit, static_cast<std::uint64_t>(j),
                                                        static_cast<std::uint64_t>(attempt)});
        for (int d = 0; d < system.n_x; ++d) {
          x0(d) = init.uniform(box[d].lo, box[d].hi);
        }
      }
      CounterRng rng = CounterRng::derive(cfg.seed, {kPurposeMain, static_cast<std::uint64_t>(j),
                                                     static_cast<std::uint64_t>(attempt)});
      accepted = simulate(system, ds.channels, x0, run_length, cfg.hold_steps, rng, nullptr, feasible,
                          cfg.feasible_fraction, run);
      for (int i = 0; i < anchors && accepted; ++i) {
        const Vec& start = run.states[static_cast<std::size_t>(i * cfg.horizon)];
        const InputSelector& first = run.selectors[static_cast<std::size_t>(i * cfg.horizon)];
        for (int s = 0; s < cfg.siblings && accepted; ++s) {
          bool ok = false;
          for (int sub = 0; sub < cfg.max_attempts && !ok; ++sub) {
            CounterRng srng = CounterRng::derive(
                cfg.seed, {kPurposeSibling, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(attempt),
                           static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(s),
                           static_cast<std::uint64_t>(sub)});
            ok = simulate(system, ds.channels, start, cfg.horizon, cfg.hold_steps, srng, &first, feasible,
                          cfg.feasible_fraction, siblings[i][s]);
          }
          accepted = ok;
        }
      }
    }
    if (!accepted) {
      throw NumericError("generate_dataset: rejection budget exhausted for long run " + std::to_string(j));
    }

    const int base = j * per_run;
    for (int i = 0; i < cfg.split; ++i) {
      ds.trajectories.push_back(make_piece(system, base + i + 1, run, i * cfg.horizon, cfg.horizon));
      if (i + 1 < cfg.split) {
        ds.successors.emplace_back(base + i + 1, base + i + 2);
      }
    }
    int next_id = base + cfg.split + 1;
    for (int i = 0; i < anchors; ++i) {
      for (int s = 0; s < cfg.siblings; ++s) {
        ds.sep_pairs.emplace_back(base + i + 1, next_id);
        ds.trajectories.push_back(make_piece(system, next_id++, siblings[i][s], 0, cfg.horizon));
      }
    }
  }
  std::sort(ds.trajectories.begin(), ds.trajectories.end(),
            [](const Trajectory& a, const Trajectory& b) { return a.id < b.id; });
  return ds;
}

int count_unseparated_pairs(const Dataset& ds) {
  int count = 0;
  for (const auto& [a, b] : ds.sep_pairs) {
    if (ds.by_id(a).outputs.at(1) == ds.by_id(b).outputs.at(1)) {
      ++count;
    }
  }
  return count;
}

std::vector<PhiSample> augment_symmetric(std::span<const PhiSample> samples, const SymmetryStructure& sym) {
  std::vector<PhiSample> out;
  out.reserve(samples.size() * static_cast<std::size_t>(sym.order()));
  for (const auto& s : samples) {
    if (s.x.size() != sym.n_x || s.z.size() != sym.n_z) {
      throw ConfigError("augment_symmetric: sample dimensions do not match the symmetry structure");
    }
    for (int g = 0; g < sym.order(); ++g) {
      out.push_back({sym.act_x(g, s.x), sym.act_z(g, s.z)});
    }
  }
  return out;
}

Trajectory symmetrize_trajectory(const Trajectory& traj, const SymmetryStructure& sym, int g,
                                 std::span<const QuantizedChannel> channels) {
  if (static_cast<int>(channels.size()) != sym.n_u) {
    throw ConfigError("symmetrize_trajectory: channel count differs from the structure's n_u");
  }
  Trajectory out;
  out.id = traj.id;
  for (const auto& x : traj.states) {
    out.states.push_back(sym.act_x(g, x));
  }
  for (const auto& y : traj.outputs) {
    if (y.size() != sym.n_x) {
      throw ConfigError("symmetrize_trajectory: outputs must be the state");
    }
    out.outputs.push_back(sym.act_x(g, y));
  }
  for (const auto& sel : traj.selectors) {
    InputSelector mirrored = sel;
    for (int k = 0; k < sym.n_u; ++k) {
      if (sym.gamma_u[g][k] < 0) {
        mirrored.idx[k] = channels[k].mirror_index(sel.idx[k]);
        if (mirrored.idx[k] < 0) {
          throw ConfigError("symmetrize_trajectory: channel " + std::to_string(k) +
                            " is not closed under negation");
        }
      }
    }
    out.selectors.push_back(std::move(mirrored));
  }
  return out;
}

}  // namespace dfkoop
