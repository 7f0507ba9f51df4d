#include "dfkoop/config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "dfkoop/error.hpp"
#include "dfkoop/io.hpp"
#include "dfkoop/systems.hpp"

namespace dfkoop {

using nlohmann::json;

namespace {

/// A JSON value together with its key path, for error messages.
class Node {
 public:
  Node(const json& value, std::string path) : v_(&value), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config: " + (path_.empty() ? std::string("<root>") : path_) + ": " + msg);
  }

  [[nodiscard]] const std::string& path() const { return path_; }
  [[nodiscard]] bool is_null() const { return v_->is_null(); }
  [[nodiscard]] bool is_string() const { return v_->is_string(); }
  [[nodiscard]] bool is_array() const { return v_->is_array(); }

  [[nodiscard]] std::optional<Node> get(const std::string& key) const {
    if (!v_->is_object()) {
      fail("expected an object");
    }
    const auto it = v_->find(key);
    if (it == v_->end()) {
      return std::nullopt;
    }
    return Node(*it, path_.empty() ? key : path_ + "." + key);
  }

  [[nodiscard]] Node at(const std::string& key) const {
    auto n = get(key);
    if (!n) {
      fail("missing key '" + key + "'");
    }
    return *n;
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    if (!v_->is_object()) {
      fail("expected an object");
    }
    for (const auto& [k, _] : v_->items()) {
      if (std::none_of(keys.begin(), keys.end(), [&k](const char* a) { return k == a; })) {
        Node(*v_, path_.empty() ? k : path_ + "." + k).fail("unknown key");
      }
    }
  }

  [[nodiscard]] std::vector<Node> items() const {
    if (!v_->is_array()) {
      fail("expected an array");
    }
    std::vector<Node> out;
    for (std::size_t i = 0; i < v_->size(); ++i) {
      out.emplace_back((*v_)[i], path_ + "[" + std::to_string(i) + "]");
    }
    return out;
  }

  [[nodiscard]] double number() const {
    if (!v_->is_number()) {
      fail("expected a number");
    }
    return v_->get<double>();
  }

  /// A number, or null for an infinite bound with the given sign.
  [[nodiscard]] double bound(double sign) const {
    return is_null() ? sign * std::numeric_limits<double>::infinity() : number();
  }

  [[nodiscard]] int integer() const {
    if (!v_->is_number_integer()) {
      fail("expected an integer");
    }
    return v_->get<int>();
  }

  [[nodiscard]] std::uint64_t seed() const {
    if (!v_->is_number_unsigned()) {
      fail("expected a non-negative integer");
    }
    return v_->get<std::uint64_t>();
  }

  [[nodiscard]] bool boolean() const {
    if (!v_->is_boolean()) {
      fail("expected true or false");
    }
    return v_->get<bool>();
  }

  [[nodiscard]] std::string string() const {
    if (!v_->is_string()) {
      fail("expected a string");
    }
    return v_->get<std::string>();
  }

  [[nodiscard]] std::vector<double> numbers() const {
    std::vector<double> out;
    for (const auto& n : items()) {
      out.push_back(n.number());
    }
    return out;
  }

  [[nodiscard]] std::vector<int> integers() const {
    std::vector<int> out;
    for (const auto& n : items()) {
      out.push_back(n.integer());
    }
    return out;
  }

  [[nodiscard]] Vec vec() const {
    const auto v = numbers();
    return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
  }

  /// Nested rows form a full matrix; a flat list is a diagonal.
  [[nodiscard]] Mat matrix() const {
    const auto rows = items();
    if (rows.empty()) {
      fail("expected a non-empty matrix");
    }
    if (!rows.front().is_array()) {
      return vec().asDiagonal();
    }
    Mat m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().items().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = rows[i].numbers();
      if (static_cast<Index>(r.size()) != m.cols()) {
        rows[i].fail("rows have different lengths");
      }
      for (std::size_t j = 0; j < r.size(); ++j) {
        m(static_cast<Index>(i), static_cast<Index>(j)) = r[j];
      }
    }
    return m;
  }

 private:
  const json* v_;
  std::string path_;
};

void read_bounds(const std::optional<Node>& n, Vec& lo, Vec& hi) {
  if (!n || n->is_null()) {
    return;
  }
  n->allow_only({"lo", "hi"});
  const auto lo_items = n->at("lo").items();
  const auto hi_items = n->at("hi").items();
  if (lo_items.size() != hi_items.size()) {
    n->fail("lo and hi differ in length");
  }
  lo.resize(static_cast<Index>(lo_items.size()));
  hi.resize(static_cast<Index>(hi_items.size()));
  for (std::size_t i = 0; i < lo_items.size(); ++i) {
    lo(static_cast<Index>(i)) = lo_items[i].bound(-1.0);
    hi(static_cast<Index>(i)) = hi_items[i].bound(1.0);
  }
}

std::vector<SignVector> sign_vectors(const Node& n) {
  std::vector<SignVector> out;
  for (const auto& item : n.items()) {
    out.push_back(item.integers());
  }
  return out;
}

void parse_dataset(const Node& n, ExperimentConfig& cfg) {
  n.allow_only({"n_long", "split", "horizon", "siblings", "siblings_per_piece", "hold_steps", "feasible_fraction",
                "max_attempts", "initial", "initial_box", "seed", "channels"});
  auto& d = cfg.dataset;
  d.n_long = n.at("n_long").integer();
  d.split = n.at("split").integer();
  d.horizon = n.at("horizon").integer();
  if (auto v = n.get("siblings")) d.siblings = v->integer();
  if (auto v = n.get("siblings_per_piece")) d.siblings_per_piece = v->boolean();
  if (auto v = n.get("hold_steps")) d.hold_steps = v->integer();
  if (auto v = n.get("feasible_fraction")) d.feasible_fraction = v->number();
  if (auto v = n.get("max_attempts")) d.max_attempts = v->integer();
  if (auto v = n.get("seed")) d.seed = v->seed();
  if (auto v = n.get("initial")) {
    const std::string s = v->string();
    if (s == "uniform") {
      d.initial = InitialSampling::Uniform;
    } else if (s == "grid") {
      d.initial = InitialSampling::Grid;
    } else {
      v->fail("expected \"uniform\" or \"grid\"");
    }
  }
  if (auto v = n.get("initial_box")) {
    for (const auto& iv : v->items()) {
      const auto pair = iv.numbers();
      if (pair.size() != 2 || !(pair[0] < pair[1])) {
        iv.fail("expected [lo, hi] with lo < hi");
      }
      d.initial_box.push_back({pair[0], pair[1]});
    }
  }
  if (d.n_long < 1 || d.split < 1 || d.horizon < 1) {
    n.fail("n_long, split and horizon must be positive");
  }
  if (d.siblings < 0 || d.hold_steps < 1 || d.max_attempts < 1) {
    n.fail("siblings must be non-negative, hold_steps and max_attempts positive");
  }
  if (!(d.feasible_fraction >= 0.0 && d.feasible_fraction <= 1.0)) {
    n.at("feasible_fraction").fail("expected a value in [0, 1]");
  }
  const Node ch = n.at("channels");
  ch.allow_only({"levels", "explicit"});
  if (auto v = ch.get("levels")) {
    cfg.channels.counts = v->integers();
    for (int c : cfg.channels.counts) {
      if (c < 1) {
        v->fail("level counts must be positive");
      }
    }
  } else if (auto e = ch.get("explicit")) {
    for (const auto& item : e->items()) {
      cfg.channels.levels.push_back(item.numbers());
    }
  } else {
    ch.fail("expected 'levels' or 'explicit'");
  }
  try {
    static_cast<void>(cfg.channels.build());
  } catch (const ConfigError& e) {
    ch.fail(e.what());
  }
}

void parse_learn(const Node& n, ExperimentConfig& cfg) {
  n.allow_only({"n_z", "iters", "v_freeze_iters", "w0", "w_mono", "w_sym_psi", "adam", "seed", "init_range",
                "stabilize_a", "symmetry"});
  auto& l = cfg.learn;
  l.n_z = n.at("n_z").integer();
  l.iters = n.at("iters").integer();
  l.v_freeze_iters = std::min(500, l.iters);
  if (auto v = n.get("v_freeze_iters")) l.v_freeze_iters = v->integer();
  if (auto v = n.get("w0")) l.w0 = v->number();
  if (auto v = n.get("w_mono")) l.w_mono = v->number();
  if (auto v = n.get("w_sym_psi")) l.w_sym_psi = v->number();
  if (auto v = n.get("seed")) l.seed = v->seed();
  if (auto v = n.get("init_range")) l.init_range = v->number();
  if (auto v = n.get("stabilize_a")) l.stabilize_a = v->boolean();
  if (auto a = n.get("adam")) {
    a->allow_only({"alpha", "beta1", "beta2", "eps"});
    if (auto v = a->get("alpha")) l.adam.alpha = v->number();
    if (auto v = a->get("beta1")) l.adam.beta1 = v->number();
    if (auto v = a->get("beta2")) l.adam.beta2 = v->number();
    if (auto v = a->get("eps")) l.adam.eps = v->number();
  }
  try {
    l.validate();
  } catch (const ConfigError& e) {
    n.fail(e.what());
  }
  if (auto s = n.get("symmetry"); s && !s->is_null()) {
    s->allow_only({"gamma_x", "gamma_u", "block_sizes"});
    SymmetrySpec spec;
    spec.gamma_x_generators = sign_vectors(s->at("gamma_x"));
    spec.gamma_u_generators = sign_vectors(s->at("gamma_u"));
    spec.block_sizes = s->at("block_sizes").integers();
    cfg.symmetry = std::move(spec);
  }
}

void parse_edmd(const Node& n, ExperimentConfig& cfg) {
  n.allow_only({"n_z", "include_state", "scale_to_unit_box", "ridge", "seed"});
  auto& e = cfg.edmd;
  e.n_z = n.at("n_z").integer();
  if (auto v = n.get("include_state")) e.include_state = v->boolean();
  if (auto v = n.get("scale_to_unit_box")) e.scale_to_unit_box = v->boolean();
  if (auto v = n.get("ridge")) e.ridge = v->number();
  if (auto v = n.get("seed")) e.seed = v->seed();
  if (e.n_z < 1 || e.ridge < 0.0) {
    n.fail("n_z must be positive and ridge non-negative");
  }
}

MpcSpec parse_mpc(const Node& n) {
  n.allow_only({"horizon", "Q", "R", "R_d", "R_units", "y_bounds", "v_bounds", "dv_bounds", "zeta", "knn",
                "preview", "log_timing", "x_init", "schedule", "qp"});
  MpcSpec s;
  auto& m = s.base;
  m.horizon = n.at("horizon").integer();
  m.q = n.at("Q").matrix();
  m.r = n.at("R").matrix();
  m.r_d = n.at("R_d").matrix();
  if (auto v = n.get("R_units")) {
    const std::string u = v->string();
    if (u == "original") {
      s.r_units = WeightUnits::Original;
    } else if (u != "lifted") {
      v->fail("expected \"lifted\" or \"original\"");
    }
  }
  read_bounds(n.get("y_bounds"), m.y_lo, m.y_hi);
  if (auto v = n.get("v_bounds"); v && v->is_string()) {
    if (v->string() != "auto") {
      v->fail("expected \"auto\", null or {lo, hi}");
    }
    s.v_bounds_auto = true;
  } else {
    read_bounds(v, m.v_lo, m.v_hi);
  }
  read_bounds(n.get("dv_bounds"), m.dv_lo, m.dv_hi);
  if (auto v = n.get("zeta"); v && !v->is_null()) {
    m.zeta = v->number();
    if (!(std::abs(*m.zeta) <= 1.0)) {
      v->fail("expected a value in [-1, 1]");
    }
  }
  if (auto k = n.get("knn")) {
    k->allow_only({"mode", "k", "candidates"});
    if (auto v = k->get("mode")) {
      const std::string mode = v->string();
      if (mode == "adaptive") {
        m.knn_mode = KnnMode::Adaptive;
      } else if (mode != "static") {
        v->fail("expected \"static\" or \"adaptive\"");
      }
    }
    if (auto v = k->get("k"); v && !v->is_null()) {
      s.knn_k = v->integer();
      if (*s.knn_k < 1) {
        v->fail("expected a positive integer");
      }
    }
    if (auto v = k->get("candidates")) {
      m.knn_candidates = v->integers();
      if (m.knn_candidates.empty() ||
          std::any_of(m.knn_candidates.begin(), m.knn_candidates.end(), [](int c) { return c < 1; })) {
        v->fail("expected a non-empty list of positive integers");
      }
    }
  }
  if (auto v = n.get("preview")) s.preview = v->boolean();
  if (auto v = n.get("log_timing")) s.log_timing = v->boolean();
  if (auto v = n.get("x_init")) s.x_init = v->vec();
  if (auto v = n.get("schedule")) {
    for (const auto& seg : v->items()) {
      seg.allow_only({"ref", "steps"});
      RefSegment r;
      r.ref = seg.at("ref").vec();
      r.steps = seg.at("steps").integer();
      if (r.steps < 0) {
        seg.at("steps").fail("expected a non-negative integer");
      }
      s.schedule.push_back(std::move(r));
    }
  }
  if (auto q = n.get("qp")) {
    q->allow_only({"eps_abs", "eps_rel", "max_iter", "rho", "sigma", "alpha", "polish"});
    if (auto v = q->get("eps_abs")) m.qp.eps_abs = v->number();
    if (auto v = q->get("eps_rel")) m.qp.eps_rel = v->number();
    if (auto v = q->get("max_iter")) m.qp.max_iter = v->integer();
    if (auto v = q->get("rho")) m.qp.rho = v->number();
    if (auto v = q->get("sigma")) m.qp.sigma = v->number();
    if (auto v = q->get("alpha")) m.qp.alpha = v->number();
    if (auto v = q->get("polish")) m.qp.polish = v->boolean();
  }
  if (m.horizon < 1) {
    n.at("horizon").fail("expected a positive integer");
  }
  return s;
}

void parse_eval(const Node& n, ExperimentConfig& cfg) {
  n.allow_only({"horizon", "initial_states", "input", "seed", "knn_k"});
  auto& e = cfg.eval;
  e.horizon = n.at("horizon").integer();
  if (e.horizon < 1) {
    n.at("horizon").fail("expected a positive integer");
  }
  if (auto v = n.get("initial_states")) {
    for (const auto& x : v->items()) {
      e.initial_states.push_back(x.vec());
    }
  }
  if (auto v = n.get("input")) {
    const std::string s = v->string();
    if (s == "random") {
      e.input = EvalInput::Random;
    } else if (s != "zero") {
      v->fail("expected \"zero\" or \"random\"");
    }
  }
  if (auto v = n.get("seed")) e.seed = v->seed();
  if (auto v = n.get("knn_k")) e.knn_k = v->integer();
}

void cross_check(const Node& root, const ExperimentConfig& cfg) {
  SystemDef sys;
  try {
    sys = make_system(cfg.system, cfg.ts);
  } catch (const ConfigError& e) {
    root.at("system").fail(e.what());
  }
  const auto channels = cfg.channels.build();
  if (static_cast<int>(channels.size()) != sys.n_u) {
    root.at("dataset").at("channels").fail("system '" + cfg.system + "' has " + std::to_string(sys.n_u) +
                                           " inputs");
  }
  if (!cfg.dataset.initial_box.empty() && static_cast<int>(cfg.dataset.initial_box.size()) != sys.n_x) {
    root.at("dataset").at("initial_box").fail("expected one interval per state");
  }
  if (cfg.symmetry) {
    const Node sn = root.at("learn").at("symmetry");
    try {
      const SignGroup group =
          generate_group(cfg.symmetry->gamma_x_generators, cfg.symmetry->gamma_u_generators, sys.n_x, sys.n_u);
      const auto s = build_structure(group.gamma_x, group.gamma_u, cfg.symmetry->block_sizes);
      if (s.n_z != cfg.learn.n_z) {
        sn.at("block_sizes").fail("block sizes must add up to learn.n_z");
      }
    } catch (const ConfigError& e) {
      if (std::string(e.what()).rfind("config:", 0) == 0) {
        throw;
      }
      sn.fail(e.what());
    }
  }
  if (cfg.mpc) {
    const Node mn = root.at("mpc");
    const auto& m = cfg.mpc->base;
    if (m.q.rows() != sys.n_y || m.q.cols() != sys.n_y) {
      mn.at("Q").fail("expected " + std::to_string(sys.n_y) + "x" + std::to_string(sys.n_y));
    }
    if (m.r.rows() != sys.n_u || m.r.cols() != sys.n_u) {
      mn.at("R").fail("expected " + std::to_string(sys.n_u) + "x" + std::to_string(sys.n_u));
    }
    if (m.r_d.rows() != sys.n_u || m.r_d.cols() != sys.n_u) {
      mn.at("R_d").fail("expected " + std::to_string(sys.n_u) + "x" + std::to_string(sys.n_u));
    }
    if (m.y_lo.size() != 0 && m.y_lo.size() != sys.n_y) {
      mn.at("y_bounds").fail("expected " + std::to_string(sys.n_y) + " entries");
    }
    if (m.v_lo.size() != 0 && m.v_lo.size() != sys.n_u) {
      mn.at("v_bounds").fail("expected " + std::to_string(sys.n_u) + " entries");
    }
    if (m.dv_lo.size() != 0 && m.dv_lo.size() != sys.n_u) {
      mn.at("dv_bounds").fail("expected " + std::to_string(sys.n_u) + " entries");
    }
    if (cfg.mpc->x_init.size() != 0 && cfg.mpc->x_init.size() != sys.n_x) {
      mn.at("x_init").fail("expected " + std::to_string(sys.n_x) + " entries");
    }
    for (std::size_t i = 0; i < cfg.mpc->schedule.size(); ++i) {
      if (cfg.mpc->schedule[i].ref.size() != sys.n_y) {
        mn.at("schedule").items()[i].at("ref").fail("expected " + std::to_string(sys.n_y) + " entries");
      }
    }
  }
  for (std::size_t i = 0; i < cfg.eval.initial_states.size(); ++i) {
    if (cfg.eval.initial_states[i].size() != sys.n_x) {
      root.at("eval").at("initial_states").items()[i].fail("expected " + std::to_string(sys.n_x) + " entries");
    }
  }
}

}  // namespace

std::vector<QuantizedChannel> ChannelSpec::build() const {
  if (!counts.empty()) {
    return make_channels(counts);
  }
  return make_channels(levels);
}

MpcConfig MpcSpec::resolve(const KoopmanPredictor& p) const {
  MpcConfig m = base;
  if (r_units == WeightUnits::Original) {
    m.r = lifted_input_weight(base.r, p.v_channels);
    m.r_d = lifted_input_weight(base.r_d, p.v_channels);
  }
  if (v_bounds_auto) {
    m.v_lo.resize(p.n_u());
    m.v_hi.resize(p.n_u());
    for (int k = 0; k < p.n_u(); ++k) {
      m.v_lo(k) = p.v_channels[k].min();
      m.v_hi(k) = p.v_channels[k].max();
    }
  }
  if (knn_k) {
    m.knn_k = *knn_k;
  }
  m.validate(p.n_y(), p.n_u());
  return m;
}

void ExperimentConfig::override_seed(std::uint64_t seed) {
  dataset.seed = seed;
  learn.seed = seed;
  edmd.seed = seed;
  eval.seed = seed;
}

std::optional<SymmetryStructure> ExperimentConfig::structure() const {
  if (!symmetry) {
    return std::nullopt;
  }
  const SystemDef sys = make_system(system, ts);
  const SignGroup group =
      generate_group(symmetry->gamma_x_generators, symmetry->gamma_u_generators, sys.n_x, sys.n_u);
  return build_structure(group.gamma_x, group.gamma_u, symmetry->block_sizes);
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  const Node root(j, "");
  root.allow_only({"system", "ts", "dataset", "learn", "edmd", "mpc", "eval"});
  ExperimentConfig cfg;
  cfg.system = root.at("system").string();
  if (auto v = root.get("ts")) {
    cfg.ts = v->number();
    if (!(cfg.ts > 0.0)) {
      v->fail("expected a positive number");
    }
  }
  parse_dataset(root.at("dataset"), cfg);
  if (auto v = root.get("learn")) parse_learn(*v, cfg);
  if (auto v = root.get("edmd")) parse_edmd(*v, cfg);
  if (auto v = root.get("mpc")) cfg.mpc = parse_mpc(*v);
  if (auto v = root.get("eval")) parse_eval(*v, cfg);
  cross_check(root, cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  return parse_config(read_text(file));
}

}  // namespace dfkoop
