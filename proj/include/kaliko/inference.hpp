#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "kaliko/kalman.hpp"
#include "kaliko/tensor.hpp"

namespace kaliko::inference {

struct PredictionResult {
  /// T_out * c predicted raw states following the context, raw units.
  Tensor trajectory;
  /// Same states in normalized coordinates.
  Tensor normalized;
  /// Decoded measurement window per predicted step, T_out x p (normalized).
  Tensor windows;
  /// Predicted latent beliefs for steps T_in + 1 .. T_in + T_out.
  std::vector<kalman::GaussianBelief> beliefs;
};

/// Filters the chunked context (raw L x n states) to its last belief, then
/// rolls out `t_out` chunked steps without measurements and decodes each
/// predicted mean. The raw prediction is the unchunked tail of those windows
/// beyond the context.
PredictionResult predict(const kalman::StateSpaceModel& ssm, const Tensor& context, std::size_t t_out);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

/// MSE and MAE over every entry; throws std::invalid_argument on a shape
/// mismatch.
Metrics eval_metrics(const Tensor& pred, const Tensor& truth);

/// Mean absolute error between each chunked measurement of the trajectories
/// (raw L x n states) and the decoding of its filtered belief
/// g(mu_{t|t}), in normalized coordinates.
double reconstruction_mae(const kalman::StateSpaceModel& ssm, const std::vector<Tensor>& trajectories);

/// `t, dim, truth, pred` rows, one per predicted entry.
void write_prediction_csv(const std::filesystem::path& path, const Tensor& truth, const Tensor& pred);

}  // namespace kaliko::inference
