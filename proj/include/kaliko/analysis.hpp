#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "kaliko/kalman.hpp"
#include "kaliko/systems.hpp"
#include "kaliko/tensor.hpp"

namespace kaliko::analysis {

using cd = std::complex<double>;

struct EigenPair {
  cd lambda;
  Eigen::VectorXcd v;  // right, unit norm
  Eigen::VectorXcd w;  // left: w^H A = lambda w^H; scaled so w^H v = 1 unless defective
  bool defective = false;
};

/// Full spectrum of a real square matrix sorted by descending |lambda|, each
/// pair checked against its right and left residual (relative 1e-8).
std::vector<EigenPair> eig(const Tensor& a);

/// Index of the largest-modulus eigenvalue with positive imaginary part, if any.
std::optional<std::size_t> top_oscillatory(const std::vector<EigenPair>& pairs);

/// phi = w^H z
cd eigenfunction_value(const EigenPair& pair, const Tensor& z);

/// Rank-one spectral projector v w^H / (w^H v); throws on a defective pair.
Eigen::MatrixXcd projector(const EigenPair& pair);

/// Returns `steps` + 1 raw states starting at x0, integrated forward or
/// backward in time.
using FlowMap = std::function<Tensor(std::span<const double> x0, std::size_t steps, bool backward)>;
FlowMap ode_flow(const systems::OdeSystem& sys, double dt);

/// Latent belief mean for a single state: the true system is run backward
/// `warmup` raw steps from x so that the last measurement window ends at x,
/// that window sequence is filtered, and the final filtered mean returned.
Tensor implicit_encode(const kalman::StateSpaceModel& ssm, std::span<const double> x, const FlowMap& flow,
                       std::size_t warmup);

/// Rectangular nx x ny grid, x1 varying fastest.
struct Grid {
  double x1_min = -1.0, x1_max = 1.0;
  double x2_min = -1.0, x2_max = 1.0;
  std::size_t nx = 1, ny = 1;

  std::size_t size() const { return nx * ny; }
  std::array<double, 2> point(std::size_t k) const;
};

Grid grid_over(const systems::InitRegion& region, std::size_t nx, std::size_t ny);

/// Complex values on a grid; points whose evaluation failed are invalid.
struct ScalarField {
  Grid grid;
  std::vector<cd> values;
  std::vector<bool> valid;

  std::size_t valid_count() const;
};

/// implicit_encode at every grid point (missing where the warmup diverges).
struct LatentGrid {
  Grid grid;
  std::vector<Tensor> latents;
  std::vector<bool> valid;
};
LatentGrid encode_grid(const kalman::StateSpaceModel& ssm, const Grid& grid, const FlowMap& flow, std::size_t warmup);

ScalarField eigenfunction_field(const LatentGrid& latents, const EigenPair& pair);
ScalarField eigenfunction_field(const kalman::StateSpaceModel& ssm, const EigenPair& pair, const Grid& grid,
                                const FlowMap& flow, std::size_t warmup);

/// Winding number of a closed complex loop: total unwrapped change of the
/// argument (closing segment included) divided by 2 pi, rounded.
int winding_number(std::span<const cd> values);

struct CycleTrace {
  std::vector<cd> phi;
  int winding = 0;
  double modulus_cv = 0.0;  // stdev(|phi|) / mean(|phi|)
};

/// Evaluates phi along `cycle` (one period of raw states); throws if any
/// point fails to encode or phi vanishes there.
CycleTrace limit_cycle_trace(const kalman::StateSpaceModel& ssm, const EigenPair& pair, const Tensor& cycle,
                             const FlowMap& flow, std::size_t warmup);

/// One period of a closed orbit through the half-line x2 = 0, x1 > center,
/// after integrating `settle` raw steps from x0.
Tensor closed_orbit(const systems::OdeSystem& sys, double dt, std::span<const double> x0, double center = 0.0,
                    std::size_t settle = 0, std::size_t max_steps = 100000);

struct ModeSample {
  std::vector<double> state;      // raw state at the end of a filtered window
  std::vector<double> projected;  // newest decoded state of the projected latent
  std::vector<double> displacement;
};

/// Filters each trajectory, projects every filtered mean onto the real
/// invariant subspace of `pair` (its conjugate included), and decodes.
std::vector<ModeSample> koopman_mode_project(const kalman::StateSpaceModel& ssm, const EigenPair& pair,
                                             const std::vector<Tensor>& trajectories);

/// Per grid point: simulate `horizon` raw steps forward, filter, and report
/// the mean absolute error of the decoded filtered means (normalized units).
ScalarField reconstruction_heatmap(const kalman::StateSpaceModel& ssm, const FlowMap& flow, const Grid& grid,
                                   std::size_t horizon);

struct ClosureReport {
  std::vector<double> residual;     // ||E(F(x)) - A E(x)||
  std::vector<double> latent_norm;  // ||E(x)||
  double median_residual = 0.0;
  double median_latent_norm = 0.0;
};

/// F advances one chunk (c raw steps). Points that fail to encode are skipped.
ClosureReport closure_residual(const kalman::StateSpaceModel& ssm, const FlowMap& flow, const Tensor& states,
                               std::size_t warmup);

/// `x1, x2, re, im, abs, arg` rows; invalid points are written as nan.
void write_field_csv(const std::filesystem::path& path, const ScalarField& field);

enum class FieldComponent { re, im, abs, arg };
/// Standalone SVG heatmap of one component with a linear color map.
void write_field_svg(const std::filesystem::path& path, const ScalarField& field, FieldComponent component,
                     std::optional<std::pair<double, double>> range = std::nullopt);

/// `idx, re, im, abs` rows.
void write_spectrum_csv(const std::filesystem::path& path, const std::vector<EigenPair>& pairs);

}  // namespace kaliko::analysis
