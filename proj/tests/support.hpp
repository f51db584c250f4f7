#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "kaliko/tensor.hpp"

namespace kaliko::test {

inline Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.data()[r * t.cols() + c];
  return m;
}

inline Eigen::VectorXd to_eigen_vec(const Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}

inline Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t = Tensor::zeros(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t(r, c) = m(r, c);
  return t;
}

inline Tensor from_eigen_vec(const Eigen::VectorXd& v) {
  return Tensor({static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

inline Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t = Tensor::zeros(r, c);
  for (auto& v : t.storage()) v = n(rng);
  return t;
}

inline Tensor random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).reshaped({n});
}

inline Tensor random_spd(std::mt19937_64& rng, std::size_t n, double floor = 0.5) {
  Tensor g = random_matrix(rng, n, n);
  Tensor s = matmul(g, g.transposed());
  for (std::size_t i = 0; i < n; ++i) s(i, i) += floor;
  return s;
}

/// Matrix with spectral radius `radius`.
inline Tensor random_stable(std::mt19937_64& rng, std::size_t n, double radius) {
  Eigen::MatrixXd a = to_eigen(random_matrix(rng, n, n));
  double rho = a.eigenvalues().cwiseAbs().maxCoeff();
  return from_eigen(a * (radius / rho));
}

/// Textbook linear Kalman filter and RTS smoother, written directly from the
/// standard recursions with dense inverses.
struct TextbookKalman {
  Eigen::MatrixXd a, q, h, r;

  struct Result {
    std::vector<Eigen::VectorXd> mp, mf, ms;  // predicted, filtered (1..T); smoothed (0..T)
    std::vector<Eigen::MatrixXd> pp, pf, ps;
  };

  Result run(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& s0, const std::vector<Eigen::VectorXd>& xs) const {
    Result out;
    Eigen::VectorXd m = mu0;
    Eigen::MatrixXd p = s0;
    for (const auto& x : xs) {
      Eigen::VectorXd m1 = a * m;
      Eigen::MatrixXd p1 = a * p * a.transpose() + q;
      Eigen::MatrixXd s = h * p1 * h.transpose() + r;
      Eigen::MatrixXd k = p1 * h.transpose() * s.inverse();
      out.mp.push_back(m1);
      out.pp.push_back(p1);
      m = m1 + k * (x - h * m1);
      p = (Eigen::MatrixXd::Identity(m.size(), m.size()) - k * h) * p1;
      out.mf.push_back(m);
      out.pf.push_back(p);
    }
    const std::size_t t = xs.size();
    out.ms.assign(t + 1, Eigen::VectorXd());
    out.ps.assign(t + 1, Eigen::MatrixXd());
    out.ms[t] = out.mf[t - 1];
    out.ps[t] = out.pf[t - 1];
    for (std::size_t i = t; i-- > 0;) {
      const Eigen::VectorXd& mf = i == 0 ? mu0 : out.mf[i - 1];
      const Eigen::MatrixXd& pf = i == 0 ? s0 : out.pf[i - 1];
      Eigen::MatrixXd j = pf * a.transpose() * out.pp[i].inverse();
      out.ms[i] = mf + j * (out.ms[i + 1] - out.mp[i]);
      out.ps[i] = pf + j * (out.ps[i + 1] - out.pp[i]) * j.transpose();
    }
    return out;
  }
};

}  // namespace kaliko::test
