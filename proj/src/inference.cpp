#include "kaliko/inference.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "kaliko/model.hpp"
#include "kaliko/systems.hpp"

namespace kaliko::inference {

PredictionResult predict(const kalman::StateSpaceModel& ssm, const Tensor& context, std::size_t t_out) {
  const auto spec = ssm.chunk_spec();
  const std::size_t n = ssm.state_dim();
  if (context.cols() != n) throw std::invalid_argument("predict: context has the wrong state dimension");
  if (context.rows() < spec.window())
    throw systems::InsufficientData("predict: context of " + std::to_string(context.rows()) +
                                    " states is shorter than one window of " + std::to_string(spec.window()));

  // Keep the newest whole chunks so that the last window ends at the last context state.
  const std::size_t used = (context.rows() / spec.chunk) * spec.chunk;
  const std::size_t skip = context.rows() - used;
  Tensor tail({used, n});
  std::copy(context.data() + skip * n, context.data() + context.size(), tail.data());
  Tensor xs = model::chunk(systems::normalize(tail, ssm.stats()), spec);

  PredictionResult out;
  out.trajectory = Tensor({t_out * spec.chunk, n});
  out.normalized = Tensor({t_out * spec.chunk, n});
  out.windows = Tensor({t_out, n * spec.window()});
  if (t_out == 0) return out;

  auto filtered = kalman::run_filter(ssm, xs);
  out.beliefs = kalman::run_rollout(ssm, filtered.filtered.back(), t_out);
  for (std::size_t t = 0; t < t_out; ++t) {
    Tensor w = ssm.decode(out.beliefs[t].mean);
    std::copy(w.data(), w.data() + w.size(), out.windows.data() + t * w.size());
  }
  // Window k (1-based) starts k chunks after the last context window, so the
  // unchunked sequence begins (n_d - 1) chunks before the first new state.
  Tensor raw = model::unchunk(out.windows, spec, n);
  const std::size_t offset = (spec.n_delays - 1) * spec.chunk;
  std::copy(raw.data() + offset * n, raw.data() + raw.size(), out.normalized.data());
  out.trajectory = systems::denormalize(out.normalized, ssm.stats());
  return out;
}

Metrics eval_metrics(const Tensor& pred, const Tensor& truth) {
  if (!pred.same_shape(truth))
    throw std::invalid_argument("eval_metrics: shape mismatch " + shape_string(pred.shape()) + " vs " +
                                shape_string(truth.shape()));
  Metrics m;
  if (pred.size() == 0) return m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    m.mse += d * d;
    m.mae += std::abs(d);
  }
  m.mse /= static_cast<double>(pred.size());
  m.mae /= static_cast<double>(pred.size());
  return m;
}

double reconstruction_mae(const kalman::StateSpaceModel& ssm, const std::vector<Tensor>& trajectories) {
  double total = 0.0;
  std::size_t count = 0;
  for (const Tensor& traj : trajectories) {
    Tensor xs = model::chunk(systems::normalize(traj, ssm.stats()), ssm.chunk_spec());
    auto filtered = kalman::run_filter(ssm, xs).filtered;
    for (std::size_t t = 0; t < filtered.size(); ++t) {
      Tensor g = ssm.decode(filtered[t].mean);
      for (std::size_t i = 0; i < g.size(); ++i) total += std::abs(g[i] - xs(t, i));
      count += g.size();
    }
  }
  if (count == 0) throw std::invalid_argument("reconstruction_mae: no trajectories");
  return total / static_cast<double>(count);
}

void write_prediction_csv(const std::filesystem::path& path, const Tensor& truth, const Tensor& pred) {
  if (!pred.same_shape(truth)) throw std::invalid_argument("write_prediction_csv: shape mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t,dim,truth,pred\n" << std::setprecision(17);
  for (std::size_t t = 0; t < truth.rows(); ++t)
    for (std::size_t d = 0; d < truth.cols(); ++d) out << t << "," << d << "," << truth(t, d) << "," << pred(t, d) << "\n";
}

}  // namespace kaliko::inference
