#pragma once

#include <cstddef>

#include "kaliko/tensor.hpp"

namespace kaliko::baselines {

constexpr double kDmdRidge = 1e-8;

/// Linear operator fitted between consecutive delay-stacked snapshots of a
/// single context window.
struct LocalDmdModel {
  std::size_t delay = 1;
  std::size_t state_dim = 1;
  /// (d*n) x (d*n)
  Tensor a;
  /// Newest delay-stacked vector of the context, oldest block first.
  Tensor tail;
};

/// Hankel columns y_t = [x_t; ...; x_{t+d-1}]; A = Y' Y^+ when Y has full row
/// rank, otherwise Y' Y^T (Y Y^T + ridge I)^-1.
/// Throws InsufficientData when the context has fewer than d + 2 states.
LocalDmdModel fit_local_dmd(const Tensor& context, std::size_t delay, double ridge = kDmdRidge);

/// Sum of squared one-step residuals ||A y_t - y_{t+1}||^2 over the context.
double dmd_fit_residual(const Tensor& context, std::size_t delay, const Tensor& a);

/// Iterates A from the context tail and reads the newest block each step.
Tensor dmd_predict(const LocalDmdModel& model, std::size_t t_out);

}  // namespace kaliko::baselines
