#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "kaliko/autodiff.hpp"
#include "kaliko/kernels.hpp"
#include "kaliko/model.hpp"

namespace kaliko::kalman {

/// Gaussian belief over the latent state, living on a tape.
struct Belief {
  ad::Var mean;
  ad::Var cov;
};

/// Plain-value copy of a Belief.
struct GaussianBelief {
  Tensor mean;
  Tensor cov;
};

GaussianBelief values(const Belief& b);
Belief on_tape(ad::Tape& tape, const GaussianBelief& b);

/// Linear latent transition z' = A z + w, w ~ N(0, Q).
class Transition {
 public:
  virtual ~Transition() = default;
  /// A x for an m-vector or an m x k matrix.
  virtual ad::Var apply(ad::Tape& tape, ad::Var x) = 0;
  /// cov + Q
  virtual ad::Var add_noise(ad::Tape& tape, ad::Var cov) = 0;
};

/// Measurement x = g(z) + v, v ~ N(0, R), linearized at a latent mean.
class Measurement {
 public:
  virtual ~Measurement() = default;
  /// g(z) and the transposed Jacobian (m x p) at z.
  virtual model::DecoderNet::Linearization linearize(ad::Tape& tape, ad::Var z) = 0;
  virtual ad::Var decode(ad::Tape& tape, ad::Var z) = 0;
  /// S + R
  virtual ad::Var add_noise(ad::Tape& tape, ad::Var s) = 0;
};

/// Dense A and Q given as tape variables.
class DenseTransition final : public Transition {
 public:
  DenseTransition(ad::Var a, ad::Var q) : a_(a), q_(q) {}
  ad::Var apply(ad::Tape&, ad::Var x) override { return ad::matmul(a_, x); }
  ad::Var add_noise(ad::Tape&, ad::Var cov) override { return ad::add(cov, q_); }

 private:
  ad::Var a_, q_;
};

/// Linear decoder g(z) = H z with dense R.
class LinearMeasurement final : public Measurement {
 public:
  LinearMeasurement(ad::Var h, ad::Var r) : h_(h), r_(r) {}
  model::DecoderNet::Linearization linearize(ad::Tape& tape, ad::Var z) override {
    return {decode(tape, z), ad::transpose(h_)};
  }
  ad::Var decode(ad::Tape&, ad::Var z) override { return ad::matmul(h_, z); }
  ad::Var add_noise(ad::Tape&, ad::Var s) override { return ad::add(s, r_); }

 private:
  ad::Var h_, r_;
};

/// Block-companion dynamics with diagonal learned Q.
class LatentTransition final : public Transition {
 public:
  explicit LatentTransition(model::KalikoModel& m) : model_(m) {}
  ad::Var apply(ad::Tape& tape, ad::Var x) override { return model_.dynamics.apply(tape, x); }
  ad::Var add_noise(ad::Tape& tape, ad::Var cov) override;

 private:
  model::KalikoModel& model_;
};

/// Decoder network with diagonal learned R.
class DecoderMeasurement final : public Measurement {
 public:
  explicit DecoderMeasurement(model::KalikoModel& m) : model_(m) {}
  model::DecoderNet::Linearization linearize(ad::Tape& tape, ad::Var z) override {
    return model_.decoder.linearize(tape, z);
  }
  ad::Var decode(ad::Tape& tape, ad::Var z) override { return model_.decoder.decode(tape, z); }
  ad::Var add_noise(ad::Tape& tape, ad::Var s) override;

 private:
  model::KalikoModel& model_;
};

/// Raised when a filter or smoother step hits a singular matrix; carries the
/// offending timestep (1-based for filter steps, 0-based for smoother steps).
class StepFailure : public SingularMatrix {
 public:
  StepFailure(std::size_t step, const std::string& what) : SingularMatrix(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// mean' = A mean, cov' = sym(A cov A^T + Q).
Belief predict_update(ad::Tape& tape, const Belief& b, Transition& dyn);

struct MeasurementResult {
  Belief posterior;
  /// g(mean) at the predicted mean, reused by the training loss.
  ad::Var decoded;
};

/// EKF update with the gain obtained by solving against H cov H^T + R.
MeasurementResult measurement_update(ad::Tape& tape, const Belief& prior, Measurement& meas, ad::Var x);

struct FilterTrace {
  Belief prior;                      // (mu_{0|0}, Sigma_{0|0})
  std::vector<Belief> predicted;     // t = 1..T : (mu_{t|t-1}, Sigma_{t|t-1})
  std::vector<Belief> filtered;      // t = 1..T : (mu_{t|t}, Sigma_{t|t})
  std::vector<ad::Var> decoded;      // g(mu_{t|t-1})
};

/// Runs T interleaved prediction and measurement updates over the rows of
/// `measurements` (T x p).
FilterTrace filter(ad::Tape& tape, ad::Var measurements, const Belief& prior, Transition& dyn, Measurement& meas);

/// Rauch-Tung-Striebel pass. Entry t of the result is (mu_{t|T}, Sigma_{t|T})
/// for t = 0..T; entry T equals the last filtered belief. With
/// with_covariance = false only the means are produced (cov left invalid).
std::vector<Belief> smooth(ad::Tape& tape, const FilterTrace& trace, Transition& dyn, bool with_covariance = true);

/// `steps` prediction updates without measurements. With
/// with_covariance = false only the means are propagated.
std::vector<Belief> rollout(ad::Tape& tape, const Belief& start, Transition& dyn, std::size_t steps,
                            bool with_covariance = true);

/// Prior belief of a model on the tape.
Belief model_prior(ad::Tape& tape, model::KalikoModel& m);

// ---- plain-value inference ---------------------------------------------------

/// A filterable latent model together with the chunking and normalization
/// that turn raw trajectories into its measurements.
class StateSpaceModel {
 public:
  struct Bound {
    Belief prior;
    std::unique_ptr<Transition> dyn;
    std::unique_ptr<Measurement> meas;
  };

  virtual ~StateSpaceModel() = default;
  /// Prior, transition and measurement bound to `tape`. Must only read the
  /// model, so that several threads can bind at once.
  virtual Bound bind(ad::Tape& tape) const = 0;
  virtual model::ChunkSpec chunk_spec() const = 0;
  virtual const systems::NormStats& stats() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t latent_dim() const = 0;
  /// Dense m x m transition matrix.
  virtual Tensor transition_matrix() const = 0;
  /// Flattened p-vector measurement predicted for latent z.
  virtual Tensor decode(const Tensor& z) const = 0;
};

/// Adapter over a trained KalikoModel.
class KalikoStateSpace final : public StateSpaceModel {
 public:
  explicit KalikoStateSpace(model::KalikoModel& m) : model_(m) {}
  Bound bind(ad::Tape& tape) const override;
  model::ChunkSpec chunk_spec() const override { return model_.config.chunk_spec(); }
  const systems::NormStats& stats() const override { return model_.stats; }
  std::size_t state_dim() const override { return model_.config.state_dim; }
  std::size_t latent_dim() const override { return model_.config.latent_dim(); }
  Tensor transition_matrix() const override { return model_.dynamics.materialize(); }
  Tensor decode(const Tensor& z) const override;

 private:
  model::KalikoModel& model_;
};

/// Linear-Gaussian model x = H z + v, z' = A z + w with dense matrices.
struct LinearGaussianModel final : public StateSpaceModel {
  Tensor a, q, h, r;
  Tensor mu0, s0;
  model::ChunkSpec spec;
  systems::NormStats norm;
  std::size_t n = 1;

  Bound bind(ad::Tape& tape) const override;
  model::ChunkSpec chunk_spec() const override { return spec; }
  const systems::NormStats& stats() const override { return norm; }
  std::size_t state_dim() const override { return n; }
  std::size_t latent_dim() const override { return a.rows(); }
  Tensor transition_matrix() const override { return a; }
  Tensor decode(const Tensor& z) const override { return matmul(h, z); }
};

struct FilterValues {
  std::vector<GaussianBelief> predicted;
  std::vector<GaussianBelief> filtered;
};

/// Filters the rows of `measurements` (T x p, normalized) without recording
/// gradients.
FilterValues run_filter(const StateSpaceModel& ssm, const Tensor& measurements);
/// `steps` prediction updates from `start` with covariances.
std::vector<GaussianBelief> run_rollout(const StateSpaceModel& ssm, const GaussianBelief& start, std::size_t steps);

}  // namespace kaliko::kalman
