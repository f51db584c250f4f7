#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kaliko/tensor.hpp"

namespace kaliko::systems {

enum class SystemKind { vdp, pendulum, duffing, hopf_bautin };

/// One of the four planar benchmark vector fields.
struct OdeSystem {
  SystemKind kind = SystemKind::vdp;
  double damping = 0.0;  // duffing only

  std::size_t state_dim() const { return 2; }
  std::string name() const;
};

SystemKind parse_system(const std::string& name);
/// Accepts "vdp", "pendulum", "duffing", "hopf_bautin".
OdeSystem make_system(const std::string& name, double damping = 0.0);

/// Raised when an integration leaves the |x| <= 1e6 box.
class Divergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Trajectory {
  Tensor states;  // T x n
  double dt = 0.05;
  double t0 = 0.0;

  std::size_t length() const { return states.rows(); }
  std::size_t dim() const { return states.cols(); }
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct Dataset {
  std::string system;
  double damping = 0.0;
  double dt = 0.05;
  std::uint64_t seed = 0;
  std::vector<Trajectory> trajectories;
  NormStats stats;
};

/// Initial-condition region: an axis-aligned box, or an annulus in radius
/// (used for hopf_bautin).
struct InitRegion {
  bool annulus = false;
  std::vector<double> lo;
  std::vector<double> hi;
  double r_min = 0.1;
  double r_max = 1.2;
};

InitRegion default_init_region(const OdeSystem& sys);

struct SampleConfig {
  std::size_t n_traj = 32;
  std::size_t steps = 400;
  double dt = 0.05;
  std::optional<InitRegion> init;
  std::uint64_t seed = 0;
};

constexpr double kDivergenceBound = 1e6;
constexpr double kStdFloor = 1e-6;

std::vector<double> vector_field(const OdeSystem& sys, std::span<const double> x);

/// Classical RK4 rollout with states[0] = x0 and `steps` further states.
/// A negative dt integrates backward in time.
Trajectory integrate_rk4(const OdeSystem& sys, std::span<const double> x0, double dt, std::size_t steps);

Dataset sample_dataset(const OdeSystem& sys, const SampleConfig& cfg);

/// Population mean/std over every state of every trajectory, Welford style.
NormStats running_stats(const std::vector<Trajectory>& trajectories);

Tensor normalize(const Tensor& states, const NormStats& stats);
Tensor denormalize(const Tensor& states, const NormStats& stats);

// ---- files -----------------------------------------------------------------

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& path);
/// Writes traj_0000.csv ... plus manifest.json into dir.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace kaliko::systems
