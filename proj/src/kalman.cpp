#include "kaliko/kalman.hpp"

namespace kaliko::kalman {

using ad::Tape;
using ad::Var;

GaussianBelief values(const Belief& b) {
  GaussianBelief out;
  out.mean = b.mean.value();
  if (b.cov.valid()) out.cov = b.cov.value();
  return out;
}

Belief on_tape(Tape& tape, const GaussianBelief& b) { return {tape.constant(b.mean), tape.constant(b.cov)}; }

Var LatentTransition::add_noise(Tape& tape, Var cov) { return ad::add_diag(cov, model_.noise.q_diag(tape)); }

Var DecoderMeasurement::add_noise(Tape& tape, Var s) { return ad::add_diag(s, model_.noise.r_diag(tape)); }

Belief predict_update(Tape& tape, const Belief& b, Transition& dyn) {
  Var mean = dyn.apply(tape, b.mean);
  // A (A cov)^T = A cov^T A^T, and cov is symmetric
  Var a_cov = dyn.apply(tape, b.cov);
  Var a_cov_at = dyn.apply(tape, ad::transpose(a_cov));
  Var cov = ad::symmetrize(dyn.add_noise(tape, a_cov_at));
  return {mean, cov};
}

MeasurementResult measurement_update(Tape& tape, const Belief& prior, Measurement& meas, Var x) {
  auto lin = meas.linearize(tape, prior.mean);
  Var h_cov = ad::matmul_tn(lin.jacobian_t, prior.cov);                // H Sigma, p x m
  Var s = meas.add_noise(tape, ad::matmul(h_cov, lin.jacobian_t));      // H Sigma H^T + R
  Var innovation = ad::sub(ad::reshape(x, {x.value().size()}), lin.value);
  Var gain_t = ad::linear_solve(s, h_cov);                              // K^T = S^-1 H Sigma
  Var mean = ad::add(prior.mean, ad::matmul_tn(gain_t, innovation));    // mu + K (x - g(mu))
  Var cov = ad::symmetrize(ad::sub(prior.cov, ad::matmul_tn(gain_t, h_cov)));  // (I - K H) Sigma
  return {{mean, cov}, lin.value};
}

FilterTrace filter(Tape& tape, Var measurements, const Belief& prior, Transition& dyn, Measurement& meas) {
  const std::size_t steps = measurements.value().rows();
  FilterTrace trace;
  trace.prior = prior;
  Belief current = prior;
  for (std::size_t t = 0; t < steps; ++t) {
    try {
      Belief pred = predict_update(tape, current, dyn);
      auto upd = measurement_update(tape, pred, meas, ad::slice(measurements, t, t + 1));
      trace.predicted.push_back(pred);
      trace.filtered.push_back(upd.posterior);
      trace.decoded.push_back(upd.decoded);
      current = upd.posterior;
    } catch (const SingularMatrix& e) {
      throw StepFailure(t + 1, "filter step " + std::to_string(t + 1) + ": " + e.what());
    }
  }
  return trace;
}

std::vector<Belief> smooth(Tape& tape, const FilterTrace& trace, Transition& dyn, bool with_covariance) {
  const std::size_t steps = trace.filtered.size();
  std::vector<Belief> out(steps + 1);
  if (steps == 0) {
    out[0] = trace.prior;
    return out;
  }
  out[steps] = trace.filtered.back();
  if (!with_covariance) out[steps].cov = Var{};
  for (std::size_t t = steps; t-- > 0;) {
    const Belief& filt = t == 0 ? trace.prior : trace.filtered[t - 1];
    const Belief& pred_next = trace.predicted[t];  // (mu_{t+1|t}, Sigma_{t+1|t})
    const Belief& smooth_next = out[t + 1];
    try {
      Var a_cov = dyn.apply(tape, filt.cov);  // A Sigma_{t|t}
      Var diff = ad::sub(smooth_next.mean, pred_next.mean);
      if (with_covariance) {
        Var gain_t = ad::linear_solve(pred_next.cov, a_cov);  // J^T = Sigma_{t+1|t}^-1 A Sigma_{t|t}
        Var mean = ad::add(filt.mean, ad::matmul_tn(gain_t, diff));
        Var dcov = ad::sub(smooth_next.cov, pred_next.cov);
        Var cov = ad::symmetrize(ad::add(filt.cov, ad::matmul_tn(gain_t, ad::matmul(dcov, gain_t))));
        out[t] = {mean, cov};
      } else {
        // J d = Sigma A^T Sigma_pred^-1 d, one vector solve
        Var v = ad::linear_solve(pred_next.cov, diff);
        out[t] = {ad::add(filt.mean, ad::matmul_tn(a_cov, v)), Var{}};
      }
    } catch (const SingularMatrix& e) {
      throw StepFailure(t, "smoother step " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Belief> rollout(Tape& tape, const Belief& start, Transition& dyn, std::size_t steps, bool with_covariance) {
  std::vector<Belief> out;
  out.reserve(steps);
  Belief current = start;
  for (std::size_t t = 0; t < steps; ++t) {
    if (with_covariance) {
      current = predict_update(tape, current, dyn);
    } else {
      current = {dyn.apply(tape, current.mean), Var{}};
    }
    out.push_back(current);
  }
  return out;
}

Belief model_prior(Tape& tape, model::KalikoModel& m) { return {m.prior.mean(tape), m.prior.cov(tape)}; }

StateSpaceModel::Bound KalikoStateSpace::bind(Tape& tape) const {
  return {model_prior(tape, model_), std::make_unique<LatentTransition>(model_),
          std::make_unique<DecoderMeasurement>(model_)};
}

Tensor KalikoStateSpace::decode(const Tensor& z) const {
  Tensor w = model_.decoder.decode(z);
  return w.reshaped({w.size()});
}

StateSpaceModel::Bound LinearGaussianModel::bind(Tape& tape) const {
  return {{tape.constant(mu0), tape.constant(s0)},
          std::make_unique<DenseTransition>(tape.constant(a), tape.constant(q)),
          std::make_unique<LinearMeasurement>(tape.constant(h), tape.constant(r))};
}

FilterValues run_filter(const StateSpaceModel& ssm, const Tensor& measurements) {
  Tape tape(false);
  auto bound = ssm.bind(tape);
  auto trace = filter(tape, tape.constant(measurements), bound.prior, *bound.dyn, *bound.meas);
  FilterValues out;
  for (const auto& b : trace.predicted) out.predicted.push_back(values(b));
  for (const auto& b : trace.filtered) out.filtered.push_back(values(b));
  return out;
}

std::vector<GaussianBelief> run_rollout(const StateSpaceModel& ssm, const GaussianBelief& start, std::size_t steps) {
  Tape tape(false);
  auto bound = ssm.bind(tape);
  std::vector<GaussianBelief> out;
  for (const auto& b : rollout(tape, on_tape(tape, start), *bound.dyn, steps, true)) out.push_back(values(b));
  return out;
}

}  // namespace kaliko::kalman
