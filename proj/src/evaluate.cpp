#include "dfkoop/evaluate.hpp"

#include <cmath>
#include <map>

#include "dfkoop/error.hpp"
#include "dfkoop/rng.hpp"

namespace dfkoop {

OpenLoopCase predict_open_loop(const KoopmanPredictor& p, const Vec& x0, std::span<const InputSelector> selectors,
                               std::vector<Vec> y_true, int k) {
  if (y_true.size() != selectors.size() + 1) {
    throw ConfigError("predict_open_loop: expected one more output than selectors");
  }
  const Rollout r = rollout(p, phi_hat(p, x0, k), selectors);
  OpenLoopCase out;
  out.y_true = std::move(y_true);
  out.y_pred = r.y;
  return out;
}

std::vector<OpenLoopCase> evaluate_on_dataset(const KoopmanPredictor& p, const Dataset& ds, int horizon, int k) {
  if (horizon < 1) {
    throw ConfigError("evaluate_on_dataset: horizon must be positive");
  }
  std::vector<OpenLoopCase> out;
  if (horizon <= ds.horizon) {
    for (const auto& tr : ds.trajectories) {
      const std::span<const InputSelector> sel(tr.selectors.data(), static_cast<std::size_t>(horizon));
      std::vector<Vec> y(tr.outputs.begin(), tr.outputs.begin() + horizon + 1);
      out.push_back(predict_open_loop(p, tr.states.front(), sel, std::move(y), k));
      out.back().id = tr.id;
    }
    return out;
  }
  std::map<int, int> next;
  std::map<int, bool> has_pred;
  for (const auto& [a, b] : ds.successors) {
    next[a] = b;
    has_pred[b] = true;
  }
  for (const auto& tr : ds.trajectories) {
    if (has_pred.count(tr.id) != 0) {
      continue;
    }
    std::vector<InputSelector> sel;
    std::vector<Vec> y{tr.outputs.front()};
    int id = tr.id;
    while (static_cast<int>(sel.size()) < horizon) {
      const Trajectory& piece = ds.by_id(id);
      for (int t = 0; t < piece.horizon() && static_cast<int>(sel.size()) < horizon; ++t) {
        sel.push_back(piece.selectors[t]);
        y.push_back(piece.outputs[t + 1]);
      }
      const auto it = next.find(id);
      if (it == next.end()) {
        break;
      }
      id = it->second;
    }
    out.push_back(predict_open_loop(p, tr.states.front(), sel, std::move(y), k));
    out.back().id = tr.id;
  }
  return out;
}

std::vector<OpenLoopCase> evaluate_from_states(const KoopmanPredictor& p, const SystemDef& system,
                                               std::span<const Vec> initial_states, int horizon, bool random_input,
                                               std::uint64_t seed, int k) {
  if (horizon < 1) {
    throw ConfigError("evaluate_from_states: horizon must be positive");
  }
  InputSelector zero;
  for (const auto& ch : p.u_channels) {
    int best = 0;
    for (int j = 1; j < ch.size(); ++j) {
      if (std::abs(ch[j]) < std::abs(ch[best])) {
        best = j;
      }
    }
    zero.idx.push_back(best);
  }
  std::vector<OpenLoopCase> out;
  for (std::size_t i = 0; i < initial_states.size(); ++i) {
    CounterRng rng = CounterRng::derive(seed, {i});
    std::vector<InputSelector> sel;
    std::vector<Vec> y{system.observe(initial_states[i])};
    Vec x = initial_states[i];
    for (int t = 0; t < horizon; ++t) {
      InputSelector s = zero;
      if (random_input) {
        for (std::size_t c = 0; c < p.u_channels.size(); ++c) {
          s.idx[c] = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.u_channels[c].size())));
        }
      }
      x = system.step(x, select_input(s, p.u_channels));
      y.push_back(system.observe(x));
      sel.push_back(std::move(s));
    }
    out.push_back(predict_open_loop(p, initial_states[i], sel, std::move(y), k));
    out.back().id = static_cast<int>(i) + 1;
  }
  return out;
}

Vec output_rmse(std::span<const OpenLoopCase> cases) {
  Vec sum;
  long long count = 0;
  for (const auto& c : cases) {
    for (std::size_t t = 0; t < c.y_true.size(); ++t) {
      const Vec e = c.y_pred[t] - c.y_true[t];
      if (sum.size() == 0) {
        sum = Vec::Zero(e.size());
      }
      sum += e.cwiseAbs2();
      ++count;
    }
  }
  if (count == 0) {
    return sum;
  }
  return (sum / static_cast<double>(count)).cwiseSqrt();
}

}  // namespace dfkoop
