#include "kaliko/systems.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace kaliko::systems {

using json = nlohmann::json;

std::string OdeSystem::name() const {
  switch (kind) {
    case SystemKind::vdp: return "vdp";
    case SystemKind::pendulum: return "pendulum";
    case SystemKind::duffing: return "duffing";
    case SystemKind::hopf_bautin: return "hopf_bautin";
  }
  return "unknown";
}

SystemKind parse_system(const std::string& name) {
  if (name == "vdp") return SystemKind::vdp;
  if (name == "pendulum") return SystemKind::pendulum;
  if (name == "duffing") return SystemKind::duffing;
  if (name == "hopf_bautin") return SystemKind::hopf_bautin;
  throw std::invalid_argument("unknown system '" + name + "'");
}

OdeSystem make_system(const std::string& name, double damping) {
  return OdeSystem{parse_system(name), damping};
}

InitRegion default_init_region(const OdeSystem& sys) {
  InitRegion r;
  switch (sys.kind) {
    case SystemKind::vdp:
    case SystemKind::duffing:
      r.lo = {-3.0, -3.0};
      r.hi = {3.0, 3.0};
      break;
    case SystemKind::pendulum:
      r.lo = {-std::numbers::pi, -2.0};
      r.hi = {std::numbers::pi, 2.0};
      break;
    case SystemKind::hopf_bautin:
      r.annulus = true;
      r.r_min = 0.1;
      r.r_max = 1.2;
      r.lo = {-1.2, -1.2};
      r.hi = {1.2, 1.2};
      break;
  }
  return r;
}

std::vector<double> vector_field(const OdeSystem& sys, std::span<const double> x) {
  const double x1 = x[0], x2 = x[1];
  switch (sys.kind) {
    case SystemKind::vdp:
      return {x1 - x1 * x1 * x1 / 3.0 - x2, x1};
    case SystemKind::pendulum:
      return {x2, std::sin(x1)};
    case SystemKind::duffing:
      return {x2, x1 - sys.damping * x2 - x1 * x1 * x1};
    case SystemKind::hopf_bautin: {
      const double r2 = x1 * x1 + x2 * x2;
      const double r = std::sqrt(r2);
      if (r == 0.0) return {0.0, 0.0};
      const double rdot = r * std::exp((1.0 - 2.0 * r2) / 2.0) * (r2 - r2 * r2 - 3.0 / 16.0);
      // theta_dot = 1; chain rule from (r, theta) to Cartesian
      const double c = x1 / r, s = x2 / r;
      return {rdot * c - x2, rdot * s + x1};
    }
  }
  return {0.0, 0.0};
}

Trajectory integrate_rk4(const OdeSystem& sys, std::span<const double> x0, double dt, std::size_t steps) {
  const std::size_t n = sys.state_dim();
  if (x0.size() != n) throw std::invalid_argument("integrate_rk4: initial state has wrong dimension");
  if (dt == 0.0 || !std::isfinite(dt)) throw std::invalid_argument("integrate_rk4: dt must be finite and non-zero");
  Trajectory traj;
  traj.dt = std::abs(dt);
  traj.states = Tensor({steps + 1, n});
  std::vector<double> x(x0.begin(), x0.end()), tmp(n);
  std::copy(x.begin(), x.end(), traj.states.data());
  for (std::size_t s = 1; s <= steps; ++s) {
    const auto k1 = vector_field(sys, x);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
    const auto k2 = vector_field(sys, tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
    const auto k3 = vector_field(sys, tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
    const auto k4 = vector_field(sys, tmp);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(x[i]) || std::abs(x[i]) > kDivergenceBound) {
        std::ostringstream os;
        os << sys.name() << " diverged at step " << s << " (|x" << i + 1 << "| > " << kDivergenceBound
           << ") from x0 = (" << x0[0] << ", " << x0[1] << ")";
        throw Divergence(os.str());
      }
    }
    std::copy(x.begin(), x.end(), traj.states.data() + s * n);
  }
  return traj;
}

namespace {

std::vector<double> draw_initial(const InitRegion& region, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (region.annulus) {
    const double r = region.r_min + (region.r_max - region.r_min) * unit(rng);
    const double th = 2.0 * std::numbers::pi * unit(rng);
    return {r * std::cos(th), r * std::sin(th)};
  }
  std::vector<double> x(region.lo.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = region.lo[i] + (region.hi[i] - region.lo[i]) * unit(rng);
  return x;
}

}  // namespace

NormStats running_stats(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("running_stats: no trajectories");
  const std::size_t n = trajectories.front().dim();
  std::vector<double> mean(n, 0.0), m2(n, 0.0);
  double count = 0.0;
  for (const auto& tr : trajectories) {
    for (std::size_t r = 0; r < tr.length(); ++r) {
      count += 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = tr.states(r, i);
        const double delta = v - mean[i];
        mean[i] += delta / count;
        m2[i] += delta * (v - mean[i]);
      }
    }
  }
  NormStats stats{mean, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) stats.std[i] = std::max(std::sqrt(m2[i] / count), kStdFloor);
  return stats;
}

Dataset sample_dataset(const OdeSystem& sys, const SampleConfig& cfg) {
  if (cfg.n_traj == 0) throw std::invalid_argument("sample_dataset: n_traj must be positive");
  if (cfg.steps < 1) throw std::invalid_argument("sample_dataset: steps must be >= 1");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("sample_dataset: dt must be positive");
  const InitRegion region = cfg.init.value_or(default_init_region(sys));
  Dataset ds;
  ds.system = sys.name();
  ds.damping = sys.damping;
  ds.dt = cfg.dt;
  ds.seed = cfg.seed;
  ds.trajectories.resize(cfg.n_traj);
  std::vector<std::string> failures(cfg.n_traj);

  // Each trajectory owns an RNG stream so results do not depend on scheduling.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < cfg.n_traj; ++k) {
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(k), std::uint64_t{0x6b616c69}};
    std::mt19937_64 rng(seq);
    constexpr int kRetries = 10;
    for (int attempt = 0; attempt <= kRetries; ++attempt) {
      const auto x0 = draw_initial(region, rng);
      try {
        ds.trajectories[k] = integrate_rk4(sys, x0, cfg.dt, cfg.steps);
        failures[k].clear();
        break;
      } catch (const Divergence& e) {
        failures[k] = e.what();
      }
    }
  }
  for (std::size_t k = 0; k < cfg.n_traj; ++k)
    if (!failures[k].empty())
      throw Divergence("trajectory " + std::to_string(k) + " diverged after 10 retries: " + failures[k]);
  ds.stats = running_stats(ds.trajectories);
  return ds;
}

Tensor normalize(const Tensor& states, const NormStats& stats) {
  const std::size_t n = stats.mean.size();
  if (states.size() % n != 0) throw std::invalid_argument("normalize: dimension mismatch");
  Tensor out = states;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - stats.mean[i % n]) / stats.std[i % n];
  return out;
}

Tensor denormalize(const Tensor& states, const NormStats& stats) {
  const std::size_t n = stats.mean.size();
  if (states.size() % n != 0) throw std::invalid_argument("denormalize: dimension mismatch");
  Tensor out = states;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * stats.std[i % n] + stats.mean[i % n];
  return out;
}

// ---- files -----------------------------------------------------------------

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t";
  for (std::size_t i = 0; i < traj.dim(); ++i) out << ",x" << i + 1;
  out << "\n" << std::setprecision(17);
  for (std::size_t r = 0; r < traj.length(); ++r) {
    out << traj.t0 + static_cast<double>(r) * traj.dt;
    for (std::size_t i = 0; i < traj.dim(); ++i) out << "," << traj.states(r, i);
    out << "\n";
  }
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (cols == 0) throw std::runtime_error(path.string() + ": missing state columns");
  std::vector<double> values, times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      const double v = std::stod(cell);
      if (c == 0) times.push_back(v); else values.push_back(v);
      ++c;
    }
    if (c != cols + 1) throw std::runtime_error(path.string() + ": ragged row");
  }
  if (times.size() < 2) throw std::runtime_error(path.string() + ": trajectory needs at least two states");
  Trajectory tr;
  tr.t0 = times.front();
  tr.dt = times[1] - times[0];
  tr.states = Tensor({times.size(), cols}, std::move(values));
  if (!tr.states.all_finite()) throw std::runtime_error(path.string() + ": non-finite state");
  return tr;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  json files = json::array();
  for (std::size_t k = 0; k < ds.trajectories.size(); ++k) {
    std::ostringstream name;
    name << "traj_" << std::setw(4) << std::setfill('0') << k << ".csv";
    write_trajectory_csv(dir / name.str(), ds.trajectories[k]);
    files.push_back(name.str());
  }
  json manifest = {
      {"system", ds.system},     {"damping", ds.damping},     {"dt", ds.dt},
      {"seed", ds.seed},         {"n_traj", ds.trajectories.size()},
      {"norm_mean", ds.stats.mean}, {"norm_std", ds.stats.std}, {"files", files},
  };
  std::ofstream out(dir / "manifest.json");
  out << std::setprecision(17) << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw std::runtime_error("no manifest.json in " + dir.string());
  std::ifstream in(manifest_path);
  const json manifest = json::parse(in);
  Dataset ds;
  ds.system = manifest.at("system").get<std::string>();
  ds.damping = manifest.value("damping", 0.0);
  ds.dt = manifest.at("dt").get<double>();
  ds.seed = manifest.value("seed", std::uint64_t{0});
  ds.stats.mean = manifest.at("norm_mean").get<std::vector<double>>();
  ds.stats.std = manifest.at("norm_std").get<std::vector<double>>();
  for (const auto& f : manifest.at("files")) ds.trajectories.push_back(read_trajectory_csv(dir / f.get<std::string>()));
  if (ds.trajectories.empty()) throw std::runtime_error("dataset in " + dir.string() + " has no trajectories");
  for (const auto& tr : ds.trajectories)
    if (tr.dim() != ds.stats.mean.size()) throw std::runtime_error("dataset dimension mismatch");
  return ds;
}

}  // namespace kaliko::systems
