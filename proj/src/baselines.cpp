#include "kaliko/baselines.hpp"

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

#include "kaliko/systems.hpp"

namespace kaliko::baselines {

namespace {

Eigen::MatrixXd hankel(const Tensor& x, std::size_t delay, std::size_t first, std::size_t count) {
  const std::size_t n = x.cols();
  Eigen::MatrixXd y(static_cast<Eigen::Index>(delay * n), static_cast<Eigen::Index>(count));
  for (std::size_t c = 0; c < count; ++c)
    for (std::size_t b = 0; b < delay; ++b)
      for (std::size_t i = 0; i < n; ++i)
        y(static_cast<Eigen::Index>(b * n + i), static_cast<Eigen::Index>(c)) = x(first + c + b, i);
  return y;
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return t;
}

void check_context(const Tensor& context, std::size_t delay) {
  if (delay == 0) throw std::invalid_argument("local DMD: delay must be >= 1");
  if (context.rows() < delay + 2)
    throw systems::InsufficientData("local DMD: context of " + std::to_string(context.rows()) +
                                    " states needs at least delay + 2 = " + std::to_string(delay + 2));
}

}  // namespace

LocalDmdModel fit_local_dmd(const Tensor& context, std::size_t delay, double ridge) {
  check_context(context, delay);
  const std::size_t n = context.cols();
  const std::size_t cols = context.rows() - delay;
  const Eigen::MatrixXd y = hankel(context, delay, 0, cols);
  const Eigen::MatrixXd y_next = hankel(context, delay, 1, cols);
  const Eigen::Index dn = y.rows();
  // least squares on Y^T A^T = Y'^T; the ridge only enters when Y lacks full row rank
  Eigen::MatrixXd at;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(y.transpose());
  if (qr.rank() == dn) {
    at = qr.solve(y_next.transpose());
  } else {
    Eigen::MatrixXd gram = y * y.transpose();
    gram.diagonal().array() += ridge;
    at = gram.ldlt().solve(y * y_next.transpose());
  }

  LocalDmdModel model;
  model.delay = delay;
  model.state_dim = n;
  model.a = to_tensor(at.transpose());
  model.tail = Tensor({static_cast<std::size_t>(dn)});
  const std::size_t start = context.rows() - delay;
  for (std::size_t b = 0; b < delay; ++b)
    for (std::size_t i = 0; i < n; ++i) model.tail[b * n + i] = context(start + b, i);
  return model;
}

double dmd_fit_residual(const Tensor& context, std::size_t delay, const Tensor& a) {
  check_context(context, delay);
  const std::size_t cols = context.rows() - delay;
  const Eigen::MatrixXd y = hankel(context, delay, 0, cols);
  const Eigen::MatrixXd y_next = hankel(context, delay, 1, cols);
  Eigen::MatrixXd am(y.rows(), y.rows());
  for (Eigen::Index i = 0; i < am.rows(); ++i)
    for (Eigen::Index j = 0; j < am.cols(); ++j) am(i, j) = a(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  return (am * y - y_next).squaredNorm();
}

Tensor dmd_predict(const LocalDmdModel& model, std::size_t t_out) {
  const std::size_t n = model.state_dim;
  const std::size_t dn = model.delay * n;
  Tensor out({t_out, n});
  Tensor y = model.tail;
  for (std::size_t t = 0; t < t_out; ++t) {
    y = matmul(model.a, y);
    for (std::size_t i = 0; i < n; ++i) out(t, i) = y[dn - n + i];
  }
  return out;
}

}  // namespace kaliko::baselines
