#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kaliko/autodiff.hpp"
#include "kaliko/model.hpp"
#include "kaliko/systems.hpp"

namespace kaliko::training {

struct TrainConfig {
  double alpha_f = 1.0;
  double alpha_p = 1.0;
  std::size_t window = 32;  // T, in chunks
  std::size_t batch_size = 1;
  std::size_t steps = 5000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double grad_clip_norm = 10.0;

  void validate() const;
};

struct StepRecord {
  std::int64_t step = 0;
  double loss_filter = 0.0;
  double loss_pred = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  double wall_seconds = 0.0;

  void write_csv(const std::filesystem::path& path) const;
};

struct LossTerms {
  ad::Var total;
  ad::Var filter;  // sum_t ||g(mu_{t|t-1}) - x_t||^2
  ad::Var pred;    // sum_t ||g(mu_bar_t) - x_t||^2
};

/// Filter, smooth back to t = 0, roll the smoothed initial belief forward
/// without measurements, and score both decodings against the window.
/// `measurements` is a chunked T x p sequence in normalized coordinates.
LossTerms replay_overshoot_loss(ad::Tape& tape, model::KalikoModel& model, const Tensor& measurements,
                                double alpha_f = 1.0, double alpha_p = 1.0);

/// Adam with decoupled per-parameter moment buffers.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const std::vector<ad::Parameter*>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Raised when the loss turns non-finite; holds the last finite model.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::int64_t step, model::KalikoModel last_good, const std::string& what)
      : std::runtime_error(what), step_(step), last_good_(std::move(last_good)) {}
  std::int64_t step() const { return step_; }
  const model::KalikoModel& last_good() const { return last_good_; }

 private:
  std::int64_t step_;
  model::KalikoModel last_good_;
};

/// Random training windows: trajectory uniform, then raw start offset uniform
/// over all offsets that leave room for `window` chunked measurements.
class WindowSampler {
 public:
  WindowSampler(const systems::Dataset& data, const model::ChunkSpec& spec, std::size_t window, std::uint64_t seed);
  /// Normalized, chunked T x p measurement sequence.
  Tensor next();

 private:
  std::vector<Tensor> normalized_;
  model::ChunkSpec spec_;
  std::size_t window_;
  std::size_t raw_span_;
  std::mt19937_64 rng_;
};

struct TrainOptions {
  /// Called after every step with the record just appended.
  std::function<void(const StepRecord&)> on_step;
};

/// Adam training with gradient-norm clipping. Per-window losses of a batch
/// are evaluated in parallel and their gradients summed in window order.
/// The model's normalization statistics are taken from the dataset.
TrainReport train(model::KalikoModel& model, const systems::Dataset& data, const TrainConfig& cfg,
                  const TrainOptions& options = {});

}  // namespace kaliko::training
