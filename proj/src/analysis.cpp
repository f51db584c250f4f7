#include "kaliko/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "kaliko/model.hpp"

namespace kaliko::analysis {

namespace {

constexpr double kResidualTol = 1e-8;

Eigen::MatrixXd to_eigen(const Tensor& a) {
  Eigen::MatrixXd m(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m(i, j) = a(i, j);
  return m;
}

double right_residual(const Eigen::MatrixXd& a, cd lambda, const Eigen::VectorXcd& v) {
  return (a.cast<cd>() * v - lambda * v).norm();
}

double left_residual(const Eigen::MatrixXd& a, cd lambda, const Eigen::VectorXcd& w) {
  return (w.adjoint() * a.cast<cd>() - lambda * w.adjoint()).norm();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

Tensor row_of(const Tensor& states, std::size_t r) {
  Tensor x({states.cols()});
  for (std::size_t i = 0; i < states.cols(); ++i) x[i] = states(r, i);
  return x;
}

// Keep the newest whole chunks so the last window ends at the last state.
Tensor measurements_ending_at_last(const kalman::StateSpaceModel& ssm, const Tensor& states) {
  const auto spec = ssm.chunk_spec();
  const std::size_t n = states.cols();
  const std::size_t used = (states.rows() / spec.chunk) * spec.chunk;
  Tensor tail({used, n});
  std::copy(states.data() + (states.rows() - used) * n, states.data() + states.size(), tail.data());
  return model::chunk(systems::normalize(tail, ssm.stats()), spec);
}

}  // namespace

std::vector<EigenPair> eig(const Tensor& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("eig: matrix must be square");
  const Eigen::MatrixXd m = to_eigen(a);
  const Eigen::Index n = m.rows();
  std::vector<EigenPair> pairs(static_cast<std::size_t>(n));
  if (n == 0) return pairs;

  Eigen::EigenSolver<Eigen::MatrixXd> right(m);
  if (right.info() != Eigen::Success) throw std::runtime_error("eig: QR iteration did not converge");
  const Eigen::VectorXcd lambdas = right.eigenvalues();
  Eigen::MatrixXcd v = right.eigenvectors();
  for (Eigen::Index k = 0; k < n; ++k) v.col(k).normalize();

  const double scale = std::max(m.norm(), std::numeric_limits<double>::min());
  const double tol = kResidualTol * scale;

  // Left eigenvectors from V^{-1} when V is comfortably invertible.
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(v);
  const bool invertible = lu.rcond() > 1e-12;
  Eigen::MatrixXcd vinv;
  if (invertible) vinv = lu.inverse();

  std::optional<Eigen::EigenSolver<Eigen::MatrixXd>> left_solver;
  std::vector<bool> used(static_cast<std::size_t>(n), false);

  for (Eigen::Index k = 0; k < n; ++k) {
    EigenPair& p = pairs[static_cast<std::size_t>(k)];
    p.lambda = lambdas(k);
    p.v = v.col(k);
    if (right_residual(m, p.lambda, p.v) > tol)
      throw std::runtime_error("eig: right residual check failed for eigenvalue " + std::to_string(k));

    bool have_left = false;
    if (invertible) {
      Eigen::VectorXcd w = vinv.row(k).adjoint();
      if (left_residual(m, p.lambda, w) <= tol * w.norm()) {
        p.w = w;
        have_left = true;
      }
    }
    if (!have_left) {
      // w^H A = lambda w^H  <=>  A^T conj(w) = lambda conj(w)
      if (!left_solver) {
        left_solver.emplace(m.transpose());
        if (left_solver->info() != Eigen::Success) throw std::runtime_error("eig: QR iteration did not converge");
      }
      const Eigen::VectorXcd mu = left_solver->eigenvalues();
      const Eigen::MatrixXcd u = left_solver->eigenvectors();
      double best_gap = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) best_gap = std::min(best_gap, std::abs(mu(j) - p.lambda));
      const double cluster = best_gap + 1e-6 * scale;
      Eigen::Index best = -1;
      double best_overlap = -1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (std::abs(mu(j) - p.lambda) > cluster) continue;
        const Eigen::VectorXcd w = u.col(j).conjugate().normalized();
        double overlap = std::abs(w.dot(p.v));
        if (used[static_cast<std::size_t>(j)]) overlap -= 1.0;
        if (overlap > best_overlap) {
          best_overlap = overlap;
          best = j;
        }
      }
      used[static_cast<std::size_t>(best)] = true;
      p.w = u.col(best).conjugate().normalized();
      const cd wv = p.w.dot(p.v);
      if (std::abs(wv) > 1e-10) {
        p.w /= std::conj(wv);
      } else {
        p.defective = true;
      }
      if (left_residual(m, p.lambda, p.w) > tol * p.w.norm())
        throw std::runtime_error("eig: left residual check failed for eigenvalue " + std::to_string(k));
    }
  }

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return std::abs(pairs[x].lambda) > std::abs(pairs[y].lambda); });
  std::vector<EigenPair> sorted;
  sorted.reserve(pairs.size());
  for (std::size_t i : order) sorted.push_back(std::move(pairs[i]));
  return sorted;
}

std::optional<std::size_t> top_oscillatory(const std::vector<EigenPair>& pairs) {
  for (std::size_t k = 0; k < pairs.size(); ++k)
    if (pairs[k].lambda.imag() > 1e-9) return k;
  return std::nullopt;
}

cd eigenfunction_value(const EigenPair& pair, const Tensor& z) {
  if (static_cast<std::size_t>(pair.w.size()) != z.size())
    throw std::invalid_argument("eigenfunction_value: latent dimension mismatch");
  cd acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) acc += std::conj(pair.w(static_cast<Eigen::Index>(i))) * z[i];
  return acc;
}

Eigen::MatrixXcd projector(const EigenPair& pair) {
  const cd wv = pair.w.dot(pair.v);
  if (pair.defective || std::abs(wv) < 1e-10) throw std::domain_error("projector: defective eigenpair (w^H v = 0)");
  return pair.v * pair.w.adjoint() / wv;
}

FlowMap ode_flow(const systems::OdeSystem& sys, double dt) {
  return [sys, dt](std::span<const double> x0, std::size_t steps, bool backward) {
    return systems::integrate_rk4(sys, x0, backward ? -dt : dt, steps).states;
  };
}

Tensor implicit_encode(const kalman::StateSpaceModel& ssm, std::span<const double> x, const FlowMap& flow,
                       std::size_t warmup) {
  const auto spec = ssm.chunk_spec();
  if (warmup < spec.window())
    throw systems::InsufficientData("implicit_encode: warmup of " + std::to_string(warmup) +
                                    " raw steps is shorter than one window of " + std::to_string(spec.window()));
  Tensor back = flow(x, warmup, true);
  const std::size_t len = back.rows();
  const std::size_t n = back.cols();
  Tensor fwd({len, n});
  for (std::size_t r = 0; r < len; ++r)
    for (std::size_t i = 0; i < n; ++i) fwd(r, i) = back(len - 1 - r, i);
  return kalman::run_filter(ssm, measurements_ending_at_last(ssm, fwd)).filtered.back().mean;
}

std::array<double, 2> Grid::point(std::size_t k) const {
  const std::size_t i = k % nx;
  const std::size_t j = k / nx;
  const double x1 = nx > 1 ? x1_min + (x1_max - x1_min) * static_cast<double>(i) / static_cast<double>(nx - 1)
                           : 0.5 * (x1_min + x1_max);
  const double x2 = ny > 1 ? x2_min + (x2_max - x2_min) * static_cast<double>(j) / static_cast<double>(ny - 1)
                           : 0.5 * (x2_min + x2_max);
  return {x1, x2};
}

Grid grid_over(const systems::InitRegion& region, std::size_t nx, std::size_t ny) {
  Grid g;
  g.nx = nx;
  g.ny = ny;
  if (region.annulus) {
    g.x1_min = g.x2_min = -region.r_max;
    g.x1_max = g.x2_max = region.r_max;
  } else {
    g.x1_min = region.lo.at(0);
    g.x1_max = region.hi.at(0);
    g.x2_min = region.lo.at(1);
    g.x2_max = region.hi.at(1);
  }
  return g;
}

std::size_t ScalarField::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

LatentGrid encode_grid(const kalman::StateSpaceModel& ssm, const Grid& grid, const FlowMap& flow, std::size_t warmup) {
  if (warmup < ssm.chunk_spec().window())
    throw systems::InsufficientData("encode_grid: warmup shorter than one window");
  LatentGrid out;
  out.grid = grid;
  out.latents.resize(grid.size());
  out.valid.assign(grid.size(), false);
  std::vector<char> ok(grid.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto x = grid.point(k);
    try {
      out.latents[k] = implicit_encode(ssm, x, flow, warmup);
      ok[k] = out.latents[k].all_finite() ? 1 : 0;
    } catch (const std::exception&) {
      ok[k] = 0;
    }
  }
  for (std::size_t k = 0; k < grid.size(); ++k) out.valid[k] = ok[k] != 0;
  return out;
}

ScalarField eigenfunction_field(const LatentGrid& latents, const EigenPair& pair) {
  ScalarField f;
  f.grid = latents.grid;
  f.values.assign(latents.grid.size(), cd(0.0, 0.0));
  f.valid = latents.valid;
  for (std::size_t k = 0; k < f.values.size(); ++k)
    if (f.valid[k]) f.values[k] = eigenfunction_value(pair, latents.latents[k]);
  return f;
}

ScalarField eigenfunction_field(const kalman::StateSpaceModel& ssm, const EigenPair& pair, const Grid& grid,
                                const FlowMap& flow, std::size_t warmup) {
  return eigenfunction_field(encode_grid(ssm, grid, flow, warmup), pair);
}

int winding_number(std::span<const cd> values) {
  if (values.empty()) throw std::invalid_argument("winding_number: empty loop");
  double total = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const cd a = values[k];
    const cd b = values[(k + 1) % values.size()];
    if (std::abs(a) == 0.0) throw std::domain_error("winding_number: zero modulus makes the argument undefined");
    double d = std::arg(b) - std::arg(a);
    while (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
    while (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
    total += d;
  }
  return static_cast<int>(std::lround(total / (2.0 * std::numbers::pi)));
}

CycleTrace limit_cycle_trace(const kalman::StateSpaceModel& ssm, const EigenPair& pair, const Tensor& cycle,
                             const FlowMap& flow, std::size_t warmup) {
  CycleTrace tr;
  tr.phi.resize(cycle.rows());
  std::vector<std::string> errors(cycle.rows());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < cycle.rows(); ++k) {
    try {
      const Tensor x = row_of(cycle, k);
      tr.phi[k] = eigenfunction_value(pair, implicit_encode(ssm, x.values(), flow, warmup));
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k)
    if (!errors[k].empty()) throw std::runtime_error("limit_cycle_trace: point " + std::to_string(k) + ": " + errors[k]);

  double max_mod = 0.0;
  for (const cd& z : tr.phi) max_mod = std::max(max_mod, std::abs(z));
  for (const cd& z : tr.phi)
    if (!(std::abs(z) > 1e-12 * max_mod) || max_mod == 0.0)
      throw std::domain_error("limit_cycle_trace: phi vanishes on the cycle, winding undefined");
  tr.winding = winding_number(tr.phi);

  double mean = 0.0;
  for (const cd& z : tr.phi) mean += std::abs(z);
  mean /= static_cast<double>(tr.phi.size());
  double var = 0.0;
  for (const cd& z : tr.phi) var += (std::abs(z) - mean) * (std::abs(z) - mean);
  tr.modulus_cv = std::sqrt(var / static_cast<double>(tr.phi.size())) / mean;
  return tr;
}

Tensor closed_orbit(const systems::OdeSystem& sys, double dt, std::span<const double> x0, double center,
                    std::size_t settle, std::size_t max_steps) {
  std::vector<double> x(x0.begin(), x0.end());
  if (settle > 0) {
    auto tr = systems::integrate_rk4(sys, x, dt, settle);
    x = {tr.states(settle, 0), tr.states(settle, 1)};
  }
  auto tr = systems::integrate_rk4(sys, x, dt, max_steps);
  const Tensor& s = tr.states;
  // Crossings of x2 = 0 on the right of `center`, keeping the first direction.
  int direction = 0;
  std::size_t first = 0;
  for (std::size_t k = 0; k + 1 < s.rows(); ++k) {
    const double a = s(k, 1);
    const double b = s(k + 1, 1);
    const bool cross = (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0);
    if (!cross || s(k + 1, 0) <= center) continue;
    const int dir = b > a ? 1 : -1;
    if (direction == 0) {
      direction = dir;
      first = k + 1;
    } else if (dir == direction) {
      Tensor out({k + 1 - first, s.cols()});
      std::copy(s.data() + first * s.cols(), s.data() + (k + 1) * s.cols(), out.data());
      return out;
    }
  }
  throw std::runtime_error("closed_orbit: no full period found within the step budget");
}

std::vector<ModeSample> koopman_mode_project(const kalman::StateSpaceModel& ssm, const EigenPair& pair,
                                             const std::vector<Tensor>& trajectories) {
  const Eigen::MatrixXcd p = projector(pair);
  const double mult = std::abs(pair.lambda.imag()) > 0.0 ? 2.0 : 1.0;
  const auto spec = ssm.chunk_spec();
  const std::size_t n = ssm.state_dim();
  const std::size_t m = ssm.latent_dim();
  std::vector<ModeSample> samples;
  for (const Tensor& traj : trajectories) {
    const std::size_t used = (traj.rows() / spec.chunk) * spec.chunk;
    Tensor xs = model::chunk(systems::normalize(traj, ssm.stats()), spec);
    auto filtered = kalman::run_filter(ssm, xs).filtered;
    for (std::size_t t = 0; t < filtered.size(); ++t) {
      Eigen::VectorXcd z(static_cast<Eigen::Index>(m));
      for (std::size_t i = 0; i < m; ++i) z(static_cast<Eigen::Index>(i)) = filtered[t].mean[i];
      const Eigen::VectorXcd pz = p * z;
      Tensor zr({m});
      for (std::size_t i = 0; i < m; ++i) zr[i] = mult * pz(static_cast<Eigen::Index>(i)).real();
      Tensor window = ssm.decode(zr).reshaped({spec.window(), n});
      Tensor newest({1, n});
      for (std::size_t i = 0; i < n; ++i) newest[i] = window(spec.window() - 1, i);
      Tensor raw = systems::denormalize(newest, ssm.stats());
      const std::size_t r = t * spec.chunk + spec.window() - 1;
      if (r >= used) break;
      ModeSample s;
      for (std::size_t i = 0; i < n; ++i) {
        s.state.push_back(traj(r, i));
        s.projected.push_back(raw[i]);
        s.displacement.push_back(raw[i] - traj(r, i));
      }
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

ScalarField reconstruction_heatmap(const kalman::StateSpaceModel& ssm, const FlowMap& flow, const Grid& grid,
                                   std::size_t horizon) {
  const auto spec = ssm.chunk_spec();
  if (horizon < spec.window())
    throw systems::InsufficientData("reconstruction_heatmap: horizon shorter than one window");
  ScalarField f;
  f.grid = grid;
  f.values.assign(grid.size(), cd(0.0, 0.0));
  std::vector<char> ok(grid.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < grid.size(); ++k) {
    try {
      const auto x0 = grid.point(k);
      Tensor states = flow(x0, horizon, false);
      const std::size_t used = (states.rows() / spec.chunk) * spec.chunk;
      Tensor head({used, states.cols()});
      std::copy(states.data(), states.data() + used * states.cols(), head.data());
      Tensor xs = model::chunk(systems::normalize(head, ssm.stats()), spec);
      auto filtered = kalman::run_filter(ssm, xs).filtered;
      double err = 0.0;
      for (std::size_t t = 0; t < filtered.size(); ++t) {
        Tensor g = ssm.decode(filtered[t].mean);
        for (std::size_t i = 0; i < g.size(); ++i) err += std::abs(g[i] - xs(t, i));
      }
      err /= static_cast<double>(xs.size());
      f.values[k] = cd(err, 0.0);
      ok[k] = std::isfinite(err) ? 1 : 0;
    } catch (const std::exception&) {
      ok[k] = 0;
    }
  }
  f.valid.assign(grid.size(), false);
  for (std::size_t k = 0; k < grid.size(); ++k) f.valid[k] = ok[k] != 0;
  return f;
}

ClosureReport closure_residual(const kalman::StateSpaceModel& ssm, const FlowMap& flow, const Tensor& states,
                               std::size_t warmup) {
  const Tensor a = ssm.transition_matrix();
  const std::size_t c = ssm.chunk_spec().chunk;
  std::vector<double> res(states.rows(), -1.0), norms(states.rows(), -1.0);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < states.rows(); ++k) {
    try {
      const Tensor x = row_of(states, k);
      Tensor ahead = flow(x.values(), c, false);
      const Tensor fx = row_of(ahead, c);
      const Tensor z = implicit_encode(ssm, x.values(), flow, warmup);
      const Tensor z_next = implicit_encode(ssm, fx.values(), flow, warmup);
      res[k] = frobenius_norm(z_next - matmul(a, z));
      norms[k] = frobenius_norm(z);
    } catch (const std::exception&) {
    }
  }
  ClosureReport out;
  for (std::size_t k = 0; k < states.rows(); ++k) {
    if (res[k] < 0.0 || !std::isfinite(res[k])) continue;
    out.residual.push_back(res[k]);
    out.latent_norm.push_back(norms[k]);
  }
  out.median_residual = median(out.residual);
  out.median_latent_norm = median(out.latent_norm);
  return out;
}

void write_field_csv(const std::filesystem::path& path, const ScalarField& field) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "x1,x2,re,im,abs,arg\n" << std::setprecision(17);
  for (std::size_t k = 0; k < field.grid.size(); ++k) {
    const auto x = field.grid.point(k);
    out << x[0] << "," << x[1] << ",";
    if (field.valid[k]) {
      const cd v = field.values[k];
      out << v.real() << "," << v.imag() << "," << std::abs(v) << "," << std::arg(v) << "\n";
    } else {
      out << "nan,nan,nan,nan\n";
    }
  }
}

namespace {

double component_of(cd v, FieldComponent c) {
  switch (c) {
    case FieldComponent::re: return v.real();
    case FieldComponent::im: return v.imag();
    case FieldComponent::abs: return std::abs(v);
    case FieldComponent::arg: return std::arg(v);
  }
  return 0.0;
}

// Five viridis stops, linearly interpolated.
std::string color_for(double u) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  u = std::clamp(u, 0.0, 1.0) * 4.0;
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(u), 3);
  const double f = u - static_cast<double>(i);
  char buf[8];
  int rgb[3];
  for (int k = 0; k < 3; ++k) rgb[k] = static_cast<int>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

}  // namespace

void write_field_svg(const std::filesystem::path& path, const ScalarField& field, FieldComponent component,
                     std::optional<std::pair<double, double>> range) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  if (range) {
    std::tie(lo, hi) = *range;
  } else {
    for (std::size_t k = 0; k < field.values.size(); ++k) {
      if (!field.valid[k]) continue;
      const double v = component_of(field.values[k], component);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
  }
  const double span = hi > lo ? hi - lo : 1.0;
  const std::size_t cell = 6;
  const std::size_t w = field.grid.nx * cell;
  const std::size_t h = field.grid.ny * cell;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h + 20 << "\">\n";
  for (std::size_t k = 0; k < field.grid.size(); ++k) {
    const std::size_t i = k % field.grid.nx;
    const std::size_t j = k / field.grid.nx;
    const std::string fill =
        field.valid[k] ? color_for((component_of(field.values[k], component) - lo) / span) : std::string("#cccccc");
    out << "<rect x=\"" << i * cell << "\" y=\"" << (field.grid.ny - 1 - j) * cell << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"" << fill << "\"/>\n";
  }
  out << "<text x=\"2\" y=\"" << h + 15 << "\" font-size=\"11\" font-family=\"monospace\">range [" << lo << ", " << hi
      << "]</text>\n</svg>\n";
}

void write_spectrum_csv(const std::filesystem::path& path, const std::vector<EigenPair>& pairs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "idx,re,im,abs\n" << std::setprecision(17);
  for (std::size_t k = 0; k < pairs.size(); ++k)
    out << k << "," << pairs[k].lambda.real() << "," << pairs[k].lambda.imag() << "," << std::abs(pairs[k].lambda)
        << "\n";
}

}  // namespace kaliko::analysis
