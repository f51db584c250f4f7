#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "cli.hpp"
#include "kaliko/analysis.hpp"
#include "kaliko/baselines.hpp"
#include "kaliko/kernels.hpp"

namespace kaliko::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void require_dir(const fs::path& dir, const char* flag) {
  if (!fs::is_directory(dir)) throw UsageError(std::string(flag) + ": no such directory " + dir.string());
}

void require_file(const fs::path& file, const char* flag) {
  if (!fs::is_regular_file(file)) throw UsageError(std::string(flag) + ": no such file " + file.string());
}

std::size_t chunks_for(std::size_t raw_steps, std::size_t c) { return (raw_steps + c - 1) / c; }

std::string window_name(const char* prefix, const EvalWindow& w) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu_%04zu.csv", prefix, w.trajectory, w.offset);
  return buf;
}

struct Scored {
  inference::Metrics normalized;
  inference::Metrics raw;
};

// Pools squared and absolute errors over every predicted entry.
class MetricPool {
 public:
  void add(const Tensor& pred, const Tensor& truth, const systems::NormStats& stats) {
    add_to(norm_, systems::normalize(pred, stats), systems::normalize(truth, stats));
    add_to(raw_, pred, truth);
  }
  Scored result() const { return {finish(norm_), finish(raw_)}; }
  std::size_t entries() const { return norm_.count; }

 private:
  struct Acc {
    double se = 0.0, ae = 0.0;
    std::size_t count = 0;
  };
  static void add_to(Acc& acc, const Tensor& p, const Tensor& t) {
    const auto m = inference::eval_metrics(p, t);
    acc.se += m.mse * static_cast<double>(p.size());
    acc.ae += m.mae * static_cast<double>(p.size());
    acc.count += p.size();
  }
  static inference::Metrics finish(const Acc& acc) {
    if (acc.count == 0) return {};
    return {acc.se / static_cast<double>(acc.count), acc.ae / static_cast<double>(acc.count)};
  }
  Acc norm_, raw_;
};

json metrics_json(std::size_t t_in, std::size_t t_out, std::size_t windows, const MetricPool& pool, bool raw_units) {
  json j = {{"T_in", t_in}, {"T_out", t_out}, {"windows", windows}};
  if (pool.entries() == 0) return j;
  const Scored s = pool.result();
  j["mse"] = s.normalized.mse;
  j["mae"] = s.normalized.mae;
  if (raw_units) {
    j["mse_raw"] = s.raw.mse;
    j["mae_raw"] = s.raw.mae;
  }
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::optional<fs::path> optional_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

// Scores KALIKO predictions on every window; writes per-window CSVs when `dir` is given.
MetricPool score_model(model::KalikoModel& m, const std::vector<EvalWindow>& windows, std::size_t t_out,
                       const std::optional<fs::path>& dir) {
  kalman::KalikoStateSpace ssm(m);
  const std::size_t c = m.config.chunk;
  std::vector<Tensor> preds(windows.size());
  std::vector<std::string> errors(windows.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < windows.size(); ++k) {
    try {
      auto r = inference::predict(ssm, windows[k].context, chunks_for(t_out, c));
      Tensor p({t_out, m.config.state_dim});
      std::copy(r.trajectory.data(), r.trajectory.data() + p.size(), p.data());
      preds[k] = std::move(p);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  MetricPool pool;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    if (!errors[k].empty()) throw systems::Divergence("prediction failed: " + errors[k]);
    if (t_out == 0) continue;
    pool.add(preds[k], windows[k].truth, m.stats);
    if (dir) inference::write_prediction_csv(*dir / window_name("pred", windows[k]), windows[k].truth, preds[k]);
  }
  return pool;
}

// ---- gen-data --------------------------------------------------------------------

struct GenDataArgs {
  std::string system;
  std::string out;
  std::size_t n_traj = 32;
  std::size_t steps = 400;
  double dt = 0.05;
  std::uint64_t seed = 0;
  double damping = 0.0;
};

void cmd_gen_data(const GenDataArgs& a) {
  systems::OdeSystem sys;
  try {
    sys = systems::make_system(a.system, a.damping);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  systems::SampleConfig sc;
  sc.n_traj = a.n_traj;
  sc.steps = a.steps;
  sc.dt = a.dt;
  sc.seed = a.seed;
  auto ds = systems::sample_dataset(sys, sc);
  systems::save_dataset(a.out, ds);
  write_run_config(a.out, {{"command", "gen-data"},
                           {"system", a.system},
                           {"damping", a.damping},
                           {"n_traj", a.n_traj},
                           {"steps", a.steps},
                           {"dt", a.dt},
                           {"seed", a.seed}});
}

// ---- train -----------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  std::size_t log_every = 0;
};

void cmd_train(const TrainArgs& a) {
  require_dir(a.data, "--data");
  RunConfig cfg;
  if (!a.config.empty()) {
    require_file(a.config, "--config");
    cfg = load_run_config(a.config);
  }
  auto data = systems::load_dataset(a.data);
  model::KalikoModel m;
  if (!a.resume.empty()) {
    require_file(a.resume, "--resume");
    m = model::load_checkpoint(a.resume);
    cfg.model = m.config;
  } else {
    cfg.model.state_dim = data.stats.mean.size();
    m = model::KalikoModel(cfg.model);
  }
  if (m.config.state_dim != data.stats.mean.size()) throw UsageError("checkpoint and dataset state dimensions differ");

  fs::create_directories(a.out);
  json resolved = {{"command", "train"}, {"data", a.data}, {"resume", a.resume}, {"config", to_json(cfg)},
                   {"start_step", m.step}};
  write_run_config(a.out, resolved);

  training::TrainOptions opt;
  if (a.log_every > 0) {
    opt.on_step = [&](const training::StepRecord& r) {
      if ((r.step + 1) % static_cast<std::int64_t>(a.log_every) == 0)
        std::cerr << "step " << r.step + 1 << " loss_filter " << r.loss_filter << " loss_pred " << r.loss_pred
                  << "\n";
    };
  }
  training::TrainReport report;
  try {
    report = training::train(m, data, cfg.training, opt);
  } catch (const training::TrainingDiverged& e) {
    model::save_checkpoint(e.last_good(), fs::path(a.out) / "last_good.klko");
    throw;
  }
  model::save_checkpoint(m, fs::path(a.out) / "model.klko");
  report.write_csv(fs::path(a.out) / "train_report.csv");
}

// ---- predict / baseline-dmd ---------------------------------------------------------

struct PredictArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::size_t t_in = 128;
  std::size_t t_out = 64;
  std::size_t stride = 0;
  bool raw_units = false;
};

void cmd_predict(const PredictArgs& a) {
  require_file(a.ckpt, "--ckpt");
  require_dir(a.data, "--data");
  auto m = model::load_checkpoint(a.ckpt);
  if (a.t_in < m.config.chunk_spec().window())
    throw UsageError("--t-in must cover at least one window of " + std::to_string(m.config.chunk_spec().window()) +
                     " states");
  auto data = systems::load_dataset(a.data);
  auto windows = eval_windows(data, a.t_in, a.t_out, a.stride);
  if (windows.empty()) throw UsageError("no trajectory is long enough for --t-in + --t-out");
  fs::create_directories(a.out);
  write_run_config(a.out, {{"command", "predict"},
                           {"ckpt", a.ckpt},
                           {"data", a.data},
                           {"t_in", a.t_in},
                           {"t_out", a.t_out},
                           {"stride", a.stride},
                           {"raw_units", a.raw_units}});
  auto pool = score_model(m, windows, a.t_out, fs::path(a.out));
  write_json(fs::path(a.out) / "metrics.json", metrics_json(a.t_in, a.t_out, windows.size(), pool, a.raw_units));
}

struct DmdArgs {
  std::string data;
  std::string out;
  std::size_t t_in = 128;
  std::size_t t_out = 64;
  std::size_t delay = 16;
  std::size_t stride = 0;
  bool raw_units = false;
};

void cmd_baseline_dmd(const DmdArgs& a) {
  require_dir(a.data, "--data");
  if (a.delay == 0 || a.delay + 2 > a.t_in)
    throw UsageError("--delay must satisfy 1 <= delay <= t_in - 2 (got " + std::to_string(a.delay) + ")");
  auto data = systems::load_dataset(a.data);
  auto windows = eval_windows(data, a.t_in, a.t_out, a.stride);
  if (windows.empty()) throw UsageError("no trajectory is long enough for --t-in + --t-out");
  fs::create_directories(a.out);
  write_run_config(a.out, {{"command", "baseline-dmd"},
                           {"data", a.data},
                           {"t_in", a.t_in},
                           {"t_out", a.t_out},
                           {"delay", a.delay},
                           {"stride", a.stride},
                           {"raw_units", a.raw_units}});
  MetricPool pool;
  for (const auto& w : windows) {
    if (a.t_out == 0) break;
    auto fit = baselines::fit_local_dmd(w.context, a.delay);
    Tensor pred = baselines::dmd_predict(fit, a.t_out);
    if (!pred.all_finite()) throw systems::Divergence("local DMD prediction diverged on " + window_name("pred", w));
    pool.add(pred, w.truth, data.stats);
    inference::write_prediction_csv(fs::path(a.out) / window_name("pred", w), w.truth, pred);
  }
  write_json(fs::path(a.out) / "metrics.json", metrics_json(a.t_in, a.t_out, windows.size(), pool, a.raw_units));
}

// ---- analyze -----------------------------------------------------------------------

struct AnalyzeArgs {
  std::string ckpt;
  std::string mode;
  std::string out;
  long eig_index = -1;
  std::size_t grid = 100;
  std::size_t warmup = 32;
  std::size_t horizon = 32;
  std::string data;
  std::size_t n_traj = 8;
  bool svg = false;
  std::vector<double> range;
  std::vector<double> x0{2.0, 0.0};
  double center = 0.0;
  std::size_t settle = 2000;
};

std::size_t pick_index(const AnalyzeArgs& a, const std::vector<analysis::EigenPair>& pairs) {
  if (a.eig_index >= 0) {
    if (static_cast<std::size_t>(a.eig_index) >= pairs.size())
      throw RangeError("--eig-index " + std::to_string(a.eig_index) + " is out of range [0, " +
                       std::to_string(pairs.size() - 1) + "]");
    return static_cast<std::size_t>(a.eig_index);
  }
  if (auto k = analysis::top_oscillatory(pairs)) return *k;
  if (pairs.empty()) throw RangeError("empty spectrum");
  return 0;
}

json pair_json(std::size_t k, const analysis::EigenPair& p) {
  return {{"eig_index", k}, {"lambda_re", p.lambda.real()}, {"lambda_im", p.lambda.imag()}, {"abs", std::abs(p.lambda)}};
}

void write_field_outputs(const AnalyzeArgs& a, const analysis::ScalarField& f, const std::string& stem, bool complex) {
  const fs::path out(a.out);
  analysis::write_field_csv(out / (stem + ".csv"), f);
  if (!a.svg) return;
  std::optional<std::pair<double, double>> range;
  if (a.range.size() == 2) range = std::make_pair(a.range[0], a.range[1]);
  analysis::write_field_svg(out / (stem + "_abs.svg"), f, analysis::FieldComponent::abs, range);
  if (complex) analysis::write_field_svg(out / (stem + "_arg.svg"), f, analysis::FieldComponent::arg, std::nullopt);
}

void cmd_analyze(const AnalyzeArgs& a) {
  require_file(a.ckpt, "--ckpt");
  if (!a.range.empty() && a.range.size() != 2) throw UsageError("--range takes two values");
  if (a.x0.size() != 2) throw UsageError("--x0 takes two values");
  auto m = model::load_checkpoint(a.ckpt);
  const auto sys = systems::make_system(m.system, m.damping);
  kalman::KalikoStateSpace ssm(m);
  const auto flow = analysis::ode_flow(sys, m.dt);
  const auto pairs = analysis::eig(m.dynamics.materialize());
  const fs::path out(a.out);
  fs::create_directories(out);

  json resolved = {{"command", "analyze"}, {"ckpt", a.ckpt},     {"mode", a.mode},   {"eig_index", a.eig_index},
                   {"grid", a.grid},       {"warmup", a.warmup}, {"horizon", a.horizon}, {"svg", a.svg},
                   {"x0", a.x0},           {"center", a.center}, {"settle", a.settle}, {"data", a.data},
                   {"n_traj", a.n_traj}};
  if (a.range.size() == 2) resolved["range"] = a.range;
  write_run_config(out, resolved);

  const auto grid = analysis::grid_over(systems::default_init_region(sys), a.grid, a.grid);
  if (a.mode == "spectrum") {
    analysis::write_spectrum_csv(out / "spectrum.csv", pairs);
  } else if (a.mode == "eigenfield") {
    const std::size_t k = pick_index(a, pairs);
    auto field = analysis::eigenfunction_field(ssm, pairs[k], grid, flow, a.warmup);
    write_field_outputs(a, field, "eigenfield", true);
    json info = pair_json(k, pairs[k]);
    info["valid_points"] = field.valid_count();
    info["grid_points"] = grid.size();
    write_json(out / "eigenfield.json", info);
  } else if (a.mode == "cycle") {
    const std::size_t k = pick_index(a, pairs);
    Tensor orbit = analysis::closed_orbit(sys, m.dt, a.x0, a.center, a.settle);
    auto trace = analysis::limit_cycle_trace(ssm, pairs[k], orbit, flow, a.warmup);
    std::ofstream csv(out / "cycle.csv");
    csv << "k,x1,x2,re,im,abs,arg\n" << std::setprecision(17);
    for (std::size_t i = 0; i < trace.phi.size(); ++i)
      csv << i << "," << orbit(i, 0) << "," << orbit(i, 1) << "," << trace.phi[i].real() << "," << trace.phi[i].imag()
          << "," << std::abs(trace.phi[i]) << "," << std::arg(trace.phi[i]) << "\n";
    json info = pair_json(k, pairs[k]);
    info["winding"] = trace.winding;
    info["modulus_cv"] = trace.modulus_cv;
    info["cycle_points"] = trace.phi.size();
    write_json(out / "winding.json", info);
  } else if (a.mode == "mode") {
    const std::size_t k = pick_index(a, pairs);
    std::vector<Tensor> trajs;
    if (!a.data.empty()) {
      require_dir(a.data, "--data");
      for (auto& tr : systems::load_dataset(a.data).trajectories) trajs.push_back(tr.states);
    } else {
      systems::SampleConfig sc;
      sc.n_traj = a.n_traj;
      sc.dt = m.dt;
      sc.seed = 7;
      for (auto& tr : systems::sample_dataset(sys, sc).trajectories) trajs.push_back(tr.states);
    }
    auto samples = analysis::koopman_mode_project(ssm, pairs[k], trajs);
    std::ofstream csv(out / "mode.csv");
    csv << "x1,x2,proj_x1,proj_x2,dx1,dx2\n" << std::setprecision(17);
    for (const auto& s : samples)
      csv << s.state[0] << "," << s.state[1] << "," << s.projected[0] << "," << s.projected[1] << ","
          << s.displacement[0] << "," << s.displacement[1] << "\n";
    write_json(out / "mode.json", pair_json(k, pairs[k]));
  } else if (a.mode == "heatmap") {
    auto field = analysis::reconstruction_heatmap(ssm, flow, grid, a.horizon);
    write_field_outputs(a, field, "heatmap", false);
  } else {
    throw UsageError("unknown --mode '" + a.mode + "'");
  }
}

// ---- ablate ------------------------------------------------------------------------

struct AblateArgs {
  std::string suite;
  std::string data;
  std::string eval;
  std::string config;
  std::string out;
  std::size_t t_in = 128;
  std::size_t t_out = 64;
  std::size_t stride = 64;
};

void cmd_ablate(const AblateArgs& a) {
  require_dir(a.data, "--data");
  AblationSetup setup;
  if (!a.config.empty()) {
    require_file(a.config, "--config");
    setup.base = load_run_config(a.config);
  }
  setup.t_in = a.t_in;
  setup.t_out = a.t_out;
  setup.stride = a.stride;
  auto data = systems::load_dataset(a.data);
  systems::Dataset train_data = data;
  systems::Dataset eval_data;
  if (!a.eval.empty()) {
    require_dir(a.eval, "--eval");
    eval_data = systems::load_dataset(a.eval);
  } else {
    if (data.trajectories.size() < 2) throw UsageError("ablate needs at least two trajectories to hold one out");
    const std::size_t held = std::max<std::size_t>(1, data.trajectories.size() / 4);
    eval_data = data;
    eval_data.trajectories.assign(data.trajectories.end() - static_cast<std::ptrdiff_t>(held), data.trajectories.end());
    train_data.trajectories.resize(data.trajectories.size() - held);
    train_data.stats = systems::running_stats(train_data.trajectories);
  }
  setup.base.model.state_dim = data.stats.mean.size();
  fs::create_directories(a.out);
  write_run_config(a.out, {{"command", "ablate"},
                           {"suite", a.suite},
                           {"data", a.data},
                           {"eval", a.eval},
                           {"t_in", a.t_in},
                           {"t_out", a.t_out},
                           {"stride", a.stride},
                           {"config", to_json(setup.base)}});
  auto rows = run_ablation(a.suite, train_data, eval_data, setup);
  write_ablation_csv(fs::path(a.out) / "ablation.csv", rows);
}

int dispatch_errors(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const systems::InsufficientData& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const model::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kUsage;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return kRange;
  } catch (const training::TrainingDiverged& e) {
    std::cerr << "training aborted at step " << e.step() << ": " << e.what() << "\n";
    return kTrainingNaN;
  } catch (const ad::NonFiniteGradient& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kTrainingNaN;
  } catch (const systems::Divergence& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const SingularMatrix& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

std::vector<EvalWindow> eval_windows(const systems::Dataset& data, std::size_t t_in, std::size_t t_out,
                                     std::size_t stride) {
  std::vector<EvalWindow> out;
  const std::size_t need = t_in + t_out;
  for (std::size_t k = 0; k < data.trajectories.size(); ++k) {
    const Tensor& s = data.trajectories[k].states;
    const std::size_t n = s.cols();
    for (std::size_t off = 0; off + need <= s.rows(); off += stride) {
      EvalWindow w;
      w.trajectory = k;
      w.offset = off;
      w.context = Tensor({t_in, n});
      w.truth = Tensor({t_out, n});
      std::copy(s.data() + off * n, s.data() + (off + t_in) * n, w.context.data());
      std::copy(s.data() + (off + t_in) * n, s.data() + (off + need) * n, w.truth.data());
      out.push_back(std::move(w));
      if (stride == 0) break;
    }
  }
  return out;
}

std::vector<AblationRow> run_ablation(const std::string& suite, const systems::Dataset& train_data,
                                      const systems::Dataset& eval, const AblationSetup& setup) {
  struct Variant {
    std::string name;
    model::ModelConfig cfg;
  };
  std::vector<Variant> variants;
  const model::ModelConfig base = setup.base.model;
  if (suite == "delay") {
    for (std::size_t nd : {1, 4, 6}) {
      auto c = base;
      c.n_delays = nd;
      variants.push_back({"n_d=" + std::to_string(nd), c});
    }
  } else if (suite == "decoder") {
    for (auto v : {model::DecoderVariant::conv, model::DecoderVariant::mlp}) {
      auto c = base;
      c.decoder = v;
      variants.push_back({"decoder=" + model::to_string(v), c});
    }
  } else if (suite == "prior") {
    for (bool fixed : {false, true}) {
      auto c = base;
      c.fixed_prior = fixed;
      variants.push_back({fixed ? "prior=fixed" : "prior=learned", c});
    }
  } else {
    throw UsageError("unknown ablation suite '" + suite + "' (expected delay, decoder or prior)");
  }

  std::vector<EvalWindow> windows = eval_windows(eval, setup.t_in, setup.t_out, setup.stride);
  if (windows.empty()) throw UsageError("no evaluation trajectory is long enough for t_in + t_out");
  std::vector<Tensor> held;
  for (const auto& tr : eval.trajectories) held.push_back(tr.states);

  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    model::KalikoModel m(v.cfg);
    auto report = training::train(m, train_data, setup.base.training);
    AblationRow row;
    row.variant = v.name;
    row.n_delays = v.cfg.n_delays;
    row.decoder = model::to_string(v.cfg.decoder);
    row.prior = v.cfg.fixed_prior ? "fixed" : "learned";
    row.seed = setup.base.training.seed;
    row.steps = setup.base.training.steps;
    row.wall_seconds = report.wall_seconds;
    row.metrics = score_model(m, windows, setup.t_out, std::nullopt).result().normalized;
    kalman::KalikoStateSpace ssm(m);
    row.recon_mae = inference::reconstruction_mae(ssm, held);
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "variant,n_delays,decoder,prior,seed,steps,mse,mae,recon_mae,wall_seconds\n" << std::setprecision(10);
  for (const auto& r : rows)
    out << r.variant << "," << r.n_delays << "," << r.decoder << "," << r.prior << "," << r.seed << "," << r.steps
        << "," << r.metrics.mse << "," << r.metrics.mae << "," << r.recon_mae << "," << r.wall_seconds << "\n";
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Kalman-filter Koopman operator learning toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Thread cap (overrides KALIKO_THREADS)");

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Simulate a dataset of trajectories");
  gen->add_option("--system", gd.system, "vdp | pendulum | duffing | hopf_bautin")->required();
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--n-traj", gd.n_traj)->check(CLI::PositiveNumber);
  gen->add_option("--steps", gd.steps)->check(CLI::PositiveNumber);
  gen->add_option("--dt", gd.dt)->check(CLI::PositiveNumber);
  gen->add_option("--seed", gd.seed);
  gen->add_option("--damping", gd.damping, "Duffing damping delta");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model with replay overshooting");
  train->add_option("--data", ta.data)->required();
  train->add_option("--config", ta.config, "JSON with optional 'model' and 'training' sections");
  train->add_option("--out", ta.out)->required();
  train->add_option("--resume", ta.resume, "Continue from a checkpoint");
  train->add_option("--log-every", ta.log_every);

  PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "Open-loop prediction from context windows");
  pred->add_option("--ckpt", pa.ckpt)->required();
  pred->add_option("--data", pa.data)->required();
  pred->add_option("--t-in", pa.t_in, "Context length in raw steps");
  pred->add_option("--t-out", pa.t_out, "Prediction length in raw steps");
  pred->add_option("--stride", pa.stride, "Window stride within a trajectory (0: one window)");
  pred->add_option("--out", pa.out)->required();
  pred->add_flag("--raw-units", pa.raw_units, "Also report metrics in raw units");

  AnalyzeArgs aa;
  auto* an = app.add_subcommand("analyze", "Spectral analysis of a trained model");
  an->add_option("--ckpt", aa.ckpt)->required();
  an->add_option("--mode", aa.mode)->required()->check(CLI::IsMember({"spectrum", "eigenfield", "cycle", "mode", "heatmap"}));
  an->add_option("--out", aa.out)->required();
  an->add_option("--eig-index", aa.eig_index, "Eigenpair index (default: top oscillatory pair)");
  an->add_option("--grid", aa.grid, "Grid points per axis")->check(CLI::PositiveNumber);
  an->add_option("--warmup", aa.warmup, "Raw steps simulated backward per encoded state");
  an->add_option("--horizon", aa.horizon, "Raw steps simulated forward per heatmap point");
  an->add_option("--data", aa.data, "Trajectories for --mode mode");
  an->add_option("--n-traj", aa.n_traj, "Simulated trajectories for --mode mode without --data");
  an->add_flag("--svg", aa.svg, "Also write SVG heatmaps");
  an->add_option("--range", aa.range, "Color range lo hi for SVG output")->expected(2);
  an->add_option("--x0", aa.x0, "Start state for --mode cycle")->expected(2);
  an->add_option("--center", aa.center, "Orbit section: x2 = 0 with x1 > center");
  an->add_option("--settle", aa.settle, "Raw steps integrated before extracting the orbit");

  DmdArgs da;
  auto* dmd = app.add_subcommand("baseline-dmd", "Local DMD baseline on context windows");
  dmd->add_option("--data", da.data)->required();
  dmd->add_option("--t-in", da.t_in);
  dmd->add_option("--t-out", da.t_out);
  dmd->add_option("--delay", da.delay);
  dmd->add_option("--stride", da.stride);
  dmd->add_option("--out", da.out)->required();
  dmd->add_flag("--raw-units", da.raw_units);

  AblateArgs ab;
  auto* abl = app.add_subcommand("ablate", "Train and compare model variants");
  abl->add_option("--suite", ab.suite)->required()->check(CLI::IsMember({"delay", "decoder", "prior"}));
  abl->add_option("--data", ab.data)->required();
  abl->add_option("--eval", ab.eval, "Held-out dataset (default: last quarter of --data)");
  abl->add_option("--config", ab.config);
  abl->add_option("--out", ab.out)->required();
  abl->add_option("--t-in", ab.t_in);
  abl->add_option("--t-out", ab.t_out);
  abl->add_option("--stride", ab.stride);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (threads > 0) {
    kernels::set_thread_count(threads);
  } else {
    kernels::set_thread_count(kernels::thread_count());
  }

  return dispatch_errors([&] {
    if (gen->parsed()) cmd_gen_data(gd);
    if (train->parsed()) cmd_train(ta);
    if (pred->parsed()) cmd_predict(pa);
    if (an->parsed()) cmd_analyze(aa);
    if (dmd->parsed()) cmd_baseline_dmd(da);
    if (abl->parsed()) cmd_ablate(ab);
  });
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"kaliko"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace kaliko::cli
