#include "kaliko/training.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>

#include "kaliko/kalman.hpp"

namespace kaliko::training {

using ad::Parameter;
using ad::Tape;
using ad::Var;

void TrainConfig::validate() const {
  if (alpha_f < 0.0 || alpha_p < 0.0) throw std::invalid_argument("alpha_f and alpha_p must be non-negative");
  if (window < 2) throw std::invalid_argument("training window T must be >= 2");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("grad_clip_norm must be positive");
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,loss_filter,loss_pred,grad_norm,wall_ms\n" << std::setprecision(17);
  for (const auto& r : steps)
    out << r.step << "," << r.loss_filter << "," << r.loss_pred << "," << r.grad_norm << "," << r.wall_ms << "\n";
}

LossTerms replay_overshoot_loss(Tape& tape, model::KalikoModel& model, const Tensor& measurements, double alpha_f,
                                double alpha_p) {
  const std::size_t steps = measurements.rows();
  const std::size_t m = model.config.latent_dim();
  kalman::LatentTransition dyn(model);
  kalman::DecoderMeasurement meas(model);
  Var xs = tape.constant(measurements);

  // (i) filter
  auto trace = kalman::filter(tape, xs, kalman::model_prior(tape, model), dyn, meas);
  Var filter_term = ad::sum_squares(ad::sub(ad::reshape(ad::concat(trace.decoded), {steps, measurements.cols()}), xs));

  // (ii) smooth back to t = 0; only the mean feeds the loss
  auto smoothed = kalman::smooth(tape, trace, dyn, /*with_covariance=*/false);

  // (iii) open-loop rollout from the smoothed initial belief
  auto predicted = kalman::rollout(tape, smoothed.front(), dyn, steps, /*with_covariance=*/false);
  std::vector<Var> means;
  means.reserve(steps);
  for (const auto& b : predicted) means.push_back(b.mean);
  Var z_rows = ad::reshape(ad::concat(means), {steps, m});
  Var pred_term = ad::sum_squares(ad::sub(model.decoder.decode_rows(tape, z_rows), xs));

  Var total = ad::add(ad::scale(filter_term, alpha_f), ad::scale(pred_term, alpha_p));
  return {total, filter_term, pred_term};
}

void Adam::step(const std::vector<Parameter*>& params) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (p.frozen) continue;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

WindowSampler::WindowSampler(const systems::Dataset& data, const model::ChunkSpec& spec, std::size_t window,
                             std::uint64_t seed)
    : spec_(spec), window_(window), raw_span_((window + spec.n_delays - 1) * spec.chunk), rng_(seed) {
  for (const auto& tr : data.trajectories) {
    if (tr.length() >= raw_span_) normalized_.push_back(systems::normalize(tr.states, data.stats));
  }
  if (normalized_.empty())
    throw systems::InsufficientData("no trajectory holds " + std::to_string(raw_span_) +
                                    " raw states needed for a training window of " + std::to_string(window) +
                                    " chunks");
}

Tensor WindowSampler::next() {
  std::uniform_int_distribution<std::size_t> pick(0, normalized_.size() - 1);
  const Tensor& states = normalized_[pick(rng_)];
  std::uniform_int_distribution<std::size_t> offset(0, states.rows() - raw_span_);
  const std::size_t start = offset(rng_);
  const std::size_t n = states.cols();
  Tensor slice({raw_span_, n});
  std::copy(states.data() + start * n, states.data() + (start + raw_span_) * n, slice.data());
  return model::chunk(slice, spec_);
}

namespace {

struct WindowResult {
  double filter = 0.0;
  double pred = 0.0;
  std::vector<std::pair<Parameter*, Tensor>> grads;
  std::string error;
};

}  // namespace

TrainReport train(model::KalikoModel& model, const systems::Dataset& data, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  TrainReport report;
  model.stats = data.stats;
  model.dt = data.dt;
  model.system = data.system;
  model.damping = data.damping;
  if (cfg.steps == 0) return report;

  // A resumed run draws fresh windows instead of replaying the first ones.
  const std::uint64_t sampler_seed =
      cfg.seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(std::max<std::int64_t>(model.step, 0));
  WindowSampler sampler(data, model.config.chunk_spec(), cfg.window, sampler_seed);
  Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
  auto params = model.parameters();
  const auto start_all = std::chrono::steady_clock::now();
  model::KalikoModel last_good = model;

  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Tensor> batch(cfg.batch_size);
    for (auto& w : batch) w = sampler.next();
    std::vector<WindowResult> results(cfg.batch_size);

#pragma omp parallel for schedule(dynamic) if (cfg.batch_size > 1)
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      try {
        Tape tape;
        auto loss = replay_overshoot_loss(tape, model, batch[b], cfg.alpha_f, cfg.alpha_p);
        results[b].filter = loss.filter.value()[0];
        results[b].pred = loss.pred.value()[0];
        if (std::isfinite(loss.total.value()[0])) {
          tape.compute_gradients(loss.total);
          results[b].grads = tape.parameter_gradients();
        }
      } catch (const std::exception& e) {
        results[b].error = e.what();
      }
    }

    StepRecord rec;
    rec.step = model.step;
    for (const auto& r : results) {
      rec.loss_filter += r.filter / static_cast<double>(cfg.batch_size);
      rec.loss_pred += r.pred / static_cast<double>(cfg.batch_size);
    }
    std::string error;
    for (const auto& r : results)
      if (!r.error.empty()) error = r.error;
    if (!error.empty() || !std::isfinite(rec.loss_filter) || !std::isfinite(rec.loss_pred)) {
      throw TrainingDiverged(model.step, last_good,
                             "non-finite loss at step " + std::to_string(model.step) +
                                 (error.empty() ? std::string() : " (" + error + ")"));
    }

    model.zero_grad();
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
    for (const auto& r : results)
      for (const auto& [p, g] : r.grads)
        for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += inv_batch * g[i];

    double sq = 0.0;
    for (const Parameter* p : params)
      for (double g : p->grad.values()) sq += g * g;
    rec.grad_norm = std::sqrt(sq);
    if (!std::isfinite(rec.grad_norm)) {
      throw TrainingDiverged(model.step, last_good, "non-finite gradient at step " + std::to_string(model.step));
    }
    if (rec.grad_norm > cfg.grad_clip_norm) {
      const double k = cfg.grad_clip_norm / rec.grad_norm;
      for (Parameter* p : params)
        for (auto& g : p->grad.values()) g *= k;
    }
    last_good = model;
    adam.step(params);
    ++model.step;

    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    report.steps.push_back(rec);
    if (options.on_step) options.on_step(rec);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_all).count();
  return report;
}

}  // namespace kaliko::training
