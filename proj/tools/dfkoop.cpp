#include <cstdint>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfkoop/config.hpp"
#include "dfkoop/edmd.hpp"
#include "dfkoop/error.hpp"
#include "dfkoop/evaluate.hpp"
#include "dfkoop/io.hpp"
#include "dfkoop/learner.hpp"
#include "dfkoop/mpc.hpp"
#include "dfkoop/summary.hpp"
#include "dfkoop/systems.hpp"

namespace fs = std::filesystem;
using namespace dfkoop;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3, kIo = 4 };

struct Options {
  std::string config;
  std::string dataset;
  std::vector<std::string> predictors;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  bool edmd = false;
  int horizon = 0;
  int knn_k = 0;
  double settle_tol = 0.05;
  std::vector<std::string> runs;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed_override) {
    cfg.override_seed(*o.seed_override);
  }
  return cfg;
}

void print_loss(const LossBreakdown& l) {
  std::cout << "loss: fit " << format_double(l.fit) << ", endpoint " << format_double(l.endpoint) << ", theta "
            << format_double(l.theta) << ", total " << format_double(l.total) << "\n";
}

void print_eigenvalues(const KoopmanPredictor& p) {
  if (p.n_z() > 64) {
    return;
  }
  std::cout << "continuous eigenvalues:\n";
  for (const auto& l : continuous_eigenvalues(p.a, p.ts)) {
    std::cout << "  " << format_double(l.real());
    if (l.imag() != 0.0) {
      std::cout << (l.imag() < 0 ? " - " : " + ") << format_double(std::abs(l.imag())) << "i";
    }
    std::cout << "\n";
  }
}

int cmd_gen(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const SystemDef sys = make_system(cfg.system, cfg.ts);
  const Dataset ds = generate_dataset(sys, cfg.channels.build(), cfg.dataset);
  write_dataset(o.out, ds);
  std::cout << "wrote " << ds.trajectories.size() << " trajectories of length " << ds.horizon << " to " << o.out
            << "\n";
  if (const int n = count_unseparated_pairs(ds); n > 0) {
    std::cout << "warning: " << n << " separation pairs share their first output\n";
  }
  return kOk;
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const Dataset ds = read_dataset(o.dataset);
  const fs::path out(o.out);
  if (o.edmd) {
    const EdmdResult r = edmd_fit(ds, cfg.edmd);
    write_predictor(out / "predictor.json", r.predictor);
    write_psi(out / "psi.csv", r.predictor);
    std::cout << "EDMD with " << r.predictor.n_z() << " lifted states, Gram condition "
              << format_double(r.condition) << "\n";
    print_eigenvalues(r.predictor);
    return kOk;
  }
  const auto sym = cfg.structure();
  try {
    const TrainResult r = train(ds, cfg.learn, sym ? &*sym : nullptr);
    write_predictor(out / "predictor.json", r.predictor);
    write_loss_history(out / "loss_history.csv", r.history);
    write_psi(out / "psi.csv", r.predictor);
    write_phi_samples(out / "phi_samples.csv", r.predictor);
    print_loss(r.history.back());
    print_eigenvalues(r.predictor);
  } catch (const TrainingDiverged& e) {
    write_loss_history(out / "loss_history.csv", e.history());
    std::cerr << "loss history up to the failure written to " << (out / "loss_history.csv").string() << "\n";
    throw;
  }
  return kOk;
}

int cmd_eval(const Options& o) {
  const KoopmanPredictor p = read_predictor(o.predictors.front());
  std::optional<ExperimentConfig> cfg;
  if (!o.config.empty()) {
    cfg = load(o);
  }
  const int k = o.knn_k > 0 ? o.knn_k : (cfg ? cfg->eval.knn_k : 1);
  std::vector<OpenLoopCase> cases;
  if (!o.dataset.empty()) {
    const Dataset ds = read_dataset(o.dataset);
    const int h = o.horizon > 0 ? o.horizon : (cfg && cfg->eval.horizon > 0 ? cfg->eval.horizon : ds.horizon);
    cases = evaluate_on_dataset(p, ds, h, k);
  } else if (cfg) {
    const int h = o.horizon > 0 ? o.horizon : cfg->eval.horizon;
    if (h < 1) {
      throw ConfigError("config: eval.horizon: missing");
    }
    if (cfg->eval.initial_states.empty()) {
      throw ConfigError("config: eval.initial_states: missing");
    }
    const SystemDef sys = make_system(cfg->system, cfg->ts);
    cases = evaluate_from_states(p, sys, cfg->eval.initial_states, h, cfg->eval.input == EvalInput::Random,
                                 cfg->eval.seed, k);
  } else {
    throw ConfigError("eval needs --dataset or --config");
  }

  std::vector<std::string> header{"case", "step", "t"};
  for (int i = 1; i <= p.n_y(); ++i) {
    header.push_back("y" + std::to_string(i));
  }
  for (int i = 1; i <= p.n_y(); ++i) {
    header.push_back("y_pred" + std::to_string(i));
  }
  CsvTable table(header);
  for (const auto& c : cases) {
    for (std::size_t t = 0; t < c.y_true.size(); ++t) {
      std::vector<std::string> row{std::to_string(c.id), std::to_string(t),
                                   format_double(static_cast<double>(t) * p.ts)};
      for (Index i = 0; i < p.n_y(); ++i) {
        row.push_back(format_double(c.y_true[t](i)));
      }
      for (Index i = 0; i < p.n_y(); ++i) {
        row.push_back(format_double(c.y_pred[t](i)));
      }
      table.add(std::move(row));
    }
  }
  table.write(fs::path(o.out) / "openloop.csv");
  const Vec rmse = output_rmse(cases);
  std::cout << cases.size() << " cases, k = " << k << "\n";
  for (Index i = 0; i < rmse.size(); ++i) {
    std::cout << "rmse y" << i + 1 << ": " << format_double(rmse(i)) << "\n";
  }
  return kOk;
}

struct PreparedRun {
  KoopmanMpc controller;
  SystemDef system;
  MpcSpec spec;
};

PreparedRun prepare_mpc(const ExperimentConfig& cfg, const Options& o, const std::string& predictor_file) {
  if (!cfg.mpc) {
    throw ConfigError("config: mpc: missing");
  }
  const MpcSpec& spec = *cfg.mpc;
  if (spec.x_init.size() == 0) {
    throw ConfigError("config: mpc.x_init: missing");
  }
  if (spec.schedule.empty()) {
    throw ConfigError("config: mpc.schedule: missing");
  }
  std::optional<Dataset> ds;
  if (!o.dataset.empty()) {
    ds = read_dataset(o.dataset);
  }
  KoopmanPredictor p;
  if (o.edmd && predictor_file.empty()) {
    if (!ds) {
      throw ConfigError("--edmd without --predictor needs --dataset");
    }
    p = edmd_fit(*ds, cfg.edmd).predictor;
  } else {
    p = read_predictor(predictor_file);
  }
  MpcConfig m = spec.resolve(p);
  if (m.knn_mode == KnnMode::Static && !spec.knn_k && ds) {
    std::vector<Vec> xs;
    std::vector<Vec> ys;
    for (const auto& tr : ds->trajectories) {
      xs.push_back(tr.states.front());
      ys.push_back(tr.outputs.front());
    }
    m.knn_k = select_knn(p, xs, ys, m.q, m.knn_candidates);
  }
  return PreparedRun{KoopmanMpc(std::move(p), std::move(m)), make_system(cfg.system, cfg.ts), spec};
}

/// Six significant digits for tables meant to be read by people.
std::string brief(double x) {
  std::ostringstream out;
  out << std::setprecision(6) << x;
  return out.str();
}

void print_summary(const RunSummary& s) {
  std::cout << std::left << std::setw(9) << "segment" << std::setw(7) << "steps" << std::setw(22) << "ref"
            << std::setw(14) << "cost" << std::setw(14) << "terminal_err"
            << "settle_s\n";
  for (std::size_t i = 0; i < s.segments.size(); ++i) {
    const auto& g = s.segments[i];
    std::ostringstream ref;
    ref << "(";
    for (Index j = 0; j < g.ref.size(); ++j) {
      ref << (j > 0 ? ", " : "") << brief(g.ref(j));
    }
    ref << ")";
    std::cout << std::setw(9) << i + 1 << std::setw(7) << g.steps << std::setw(22) << ref.str() << std::setw(14)
              << brief(g.tracking_cost) << std::setw(14) << brief(g.terminal_error)
              << (g.settle_time < 0 ? std::string("-") : brief(g.settle_time)) << "\n";
  }
  std::cout << std::right << "total cost " << brief(s.total_cost) << "; solve ms mean " << brief(s.solve_time.mean_ms)
            << ", median " << brief(s.solve_time.median_ms) << ", max " << brief(s.solve_time.max_ms) << "\n";
}

RunLog run_mpc(const ExperimentConfig& cfg, const Options& o, const std::string& predictor_file) {
  PreparedRun r = prepare_mpc(cfg, o, predictor_file);
  std::cout << "k = " << r.controller.config().knn_k << ", horizon " << r.controller.config().horizon << "\n";
  return closed_loop(r.system, r.controller, r.spec.x_init, r.spec.schedule, r.spec.preview, r.spec.log_timing);
}

int cmd_mpc(const Options& o) {
  const ExperimentConfig cfg = load(o);
  if (o.predictors.empty() && !o.edmd) {
    throw ConfigError("mpc needs --predictor or --edmd");
  }
  const RunLog log = run_mpc(cfg, o, o.predictors.empty() ? std::string() : o.predictors.front());
  write_run(fs::path(o.out) / "run.csv", log);
  const SystemDef sys = make_system(cfg.system, cfg.ts);
  print_summary(summarize_run(log, sys.output, o.settle_tol));
  if (log.diverged) {
    throw NumericError("closed loop stopped: " + log.message);
  }
  return kOk;
}

int cmd_compare(const Options& o) {
  std::vector<RunLog> logs;
  std::vector<std::string> names;
  std::optional<ExperimentConfig> cfg;
  if (!o.config.empty()) {
    cfg = load(o);
  }
  if (!o.runs.empty()) {
    if (o.runs.size() != 2) {
      throw ConfigError("compare takes exactly two run files");
    }
    for (const auto& f : o.runs) {
      logs.push_back(read_run(f));
      names.push_back(f);
    }
  } else {
    if (o.predictors.size() != 2 || !cfg) {
      throw ConfigError("compare needs two run files, or two --predictor files and --config");
    }
    for (const auto& f : o.predictors) {
      logs.push_back(run_mpc(*cfg, o, f));
      names.push_back(f);
    }
  }
  check_same_schedule(logs[0], logs[1]);
  OutputMap output;
  if (cfg) {
    output = make_system(cfg->system, cfg->ts).output;
  }
  std::vector<RunSummary> sums;
  for (std::size_t i = 0; i < 2; ++i) {
    sums.push_back(summarize_run(logs[i], output, o.settle_tol));
    std::cout << "== " << names[i] << "\n";
    print_summary(sums.back());
  }
  std::cout << "== difference (second - first)\n";
  for (std::size_t i = 0; i < sums[0].segments.size(); ++i) {
    const auto& a = sums[0].segments[i];
    const auto& b = sums[1].segments[i];
    std::cout << "segment " << i + 1 << ": cost " << brief(b.tracking_cost - a.tracking_cost) << ", terminal_err "
              << brief(b.terminal_error - a.terminal_error) << "\n";
  }
  std::cout << "total cost " << brief(sums[1].total_cost - sums[0].total_cost) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dictionary-free Koopman predictors and Koopman MPC"};
  app.require_subcommand(1);
  Options o;
  const auto seed_opt = [&o](CLI::App* sub) {
    sub->add_option("--seed-override", o.seed_override, "Replace every seed in the config");
  };

  auto* gen = app.add_subcommand("gen", "Generate a trajectory dataset");
  gen->add_option("--config", o.config, "Experiment config")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "Dataset directory")->required();
  seed_opt(gen);

  auto* tr = app.add_subcommand("train", "Learn a predictor from a dataset");
  tr->add_option("--config", o.config, "Experiment config")->required()->check(CLI::ExistingFile);
  tr->add_option("--dataset", o.dataset, "Dataset directory")->required();
  tr->add_option("--out", o.out, "Output directory")->required();
  tr->add_flag("--edmd", o.edmd, "Fit the EDMD baseline instead");
  seed_opt(tr);

  auto* ev = app.add_subcommand("eval", "Open-loop prediction against the true system");
  ev->add_option("--predictor", o.predictors, "Predictor file")->required()->expected(1);
  ev->add_option("--dataset", o.dataset, "Compare against dataset trajectories");
  ev->add_option("--config", o.config, "Use the config's eval block");
  ev->add_option("--horizon", o.horizon, "Prediction horizon in steps");
  ev->add_option("--k", o.knn_k, "Neighbours for the state lifting");
  ev->add_option("--out", o.out, "Output directory")->required();
  seed_opt(ev);

  auto* mpc = app.add_subcommand("mpc", "Closed-loop Koopman MPC run");
  mpc->add_option("--config", o.config, "Experiment config")->required()->check(CLI::ExistingFile);
  mpc->add_option("--predictor", o.predictors, "Predictor file")->expected(1);
  mpc->add_option("--dataset", o.dataset, "Dataset for k selection and --edmd");
  mpc->add_flag("--edmd", o.edmd, "Fit the EDMD baseline from --dataset");
  mpc->add_option("--out", o.out, "Output directory")->required();
  mpc->add_option("--settle-tol", o.settle_tol, "Tolerance for settle times");
  seed_opt(mpc);

  auto* cmp = app.add_subcommand("compare", "Compare two closed-loop runs");
  cmp->add_option("runs", o.runs, "Two run.csv files");
  cmp->add_option("--predictor", o.predictors, "Run both predictors instead");
  cmp->add_option("--config", o.config, "Experiment config (output map and MPC block)");
  cmp->add_option("--dataset", o.dataset, "Dataset for k selection");
  cmp->add_option("--settle-tol", o.settle_tol, "Tolerance for settle times");
  seed_opt(cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen(o);
    if (tr->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_eval(o);
    if (mpc->parsed()) return cmd_mpc(o);
    return cmd_compare(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
