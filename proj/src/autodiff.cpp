#include "kaliko/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "kaliko/kernels.hpp"

namespace kaliko::ad {

using kernels::Trans;

const Tensor& Var::value() const { return tape->value(id); }

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

// ---- tape ------------------------------------------------------------------

Var Tape::push(Node node) {
#ifndef NDEBUG
  if (!node.value.all_finite()) throw std::runtime_error("non-finite value produced on tape");
#endif
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var{this, it->second};
  Node n;
  n.value = p.value;
  n.requires_grad = record_gradients_ && !p.frozen;
  n.param = &p;
  Var v = push(std::move(n));
  bound_.emplace(&p, v.id);
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) n.requires_grad = n.requires_grad || requires_grad(p.id);
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) n.requires_grad = n.requires_grad || requires_grad(p.id);
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::compute_gradients(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("loss belongs to a different tape");
  if (value(loss.id).size() != 1) throw std::invalid_argument("backward requires a scalar loss");
  for (auto& n : nodes_) n.grad = Tensor();
  grad(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::accumulate_parameter_gradients(double scale) const {
  for (const auto& n : nodes_) {
    if (n.param == nullptr || !n.requires_grad) continue;
    Parameter& p = *n.param;
    if (!p.grad.same_shape(p.value)) p.grad = Tensor(p.value.shape());
    if (n.grad.empty()) continue;
    kernels::axpy(p.grad.size(), scale, n.grad.data(), p.grad.data());
  }
}

std::vector<std::pair<Parameter*, Tensor>> Tape::parameter_gradients() const {
  std::vector<std::pair<Parameter*, Tensor>> out;
  for (const auto& n : nodes_) {
    if (n.param == nullptr || !n.requires_grad) continue;
    out.emplace_back(n.param, n.grad.empty() ? Tensor(n.value.shape()) : n.grad);
  }
  return out;
}

void Tape::backward(Var loss) {
  compute_gradients(loss);
  accumulate_parameter_gradients();
  for (const auto& n : nodes_) {
    if (n.param == nullptr || !n.requires_grad) continue;
    if (!n.param->grad.all_finite())
      throw NonFiniteGradient(n.param->name, "non-finite gradient in parameter '" + n.param->name + "'");
  }
}

// ---- helpers ---------------------------------------------------------------

namespace {

std::vector<std::size_t> matmul_shape(const Tensor& a, const Tensor& b, std::size_t rows,
                                      std::size_t cols) {
  if (b.rank() == 1 && cols == 1) return {rows};
  (void)a;
  return {rows, cols};
}

void check_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

double gelu_second_derivative(double x) {
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return pdf * (2.0 - x * x);
}

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows())
    throw std::invalid_argument("matmul: shape mismatch " + shape_string(av.shape()) + " x " +
                                shape_string(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(matmul_shape(av, bv, m, n));
  kernels::gemm(Trans::no, Trans::no, m, n, k, 1.0, av.data(), bv.data(), 0.0, out.data());
  return t.record(std::move(out), {a, b}, [a, b, m, n, k](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a))
      kernels::gemm(Trans::no, Trans::yes, m, k, n, 1.0, g.data(), tp.value(b.id).data(), 1.0,
                    tp.grad(a).data());
    if (tp.requires_grad(b))
      kernels::gemm(Trans::yes, Trans::no, k, n, m, 1.0, tp.value(a.id).data(), g.data(), 1.0,
                    tp.grad(b).data());
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols())
    throw std::invalid_argument("matmul_nt: shape mismatch " + shape_string(av.shape()) + " x " +
                                shape_string(bv.shape()) + "^T");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  kernels::gemm(Trans::no, Trans::yes, m, n, k, 1.0, av.data(), bv.data(), 0.0, out.data());
  return t.record(std::move(out), {a, b}, [a, b, m, n, k](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a))
      kernels::gemm(Trans::no, Trans::no, m, k, n, 1.0, g.data(), tp.value(b.id).data(), 1.0,
                    tp.grad(a).data());
    if (tp.requires_grad(b))
      kernels::gemm(Trans::yes, Trans::no, n, k, m, 1.0, g.data(), tp.value(a.id).data(), 1.0,
                    tp.grad(b).data());
  });
}

Var matmul_tn(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows())
    throw std::invalid_argument("matmul_tn: shape mismatch " + shape_string(av.shape()) + "^T x " +
                                shape_string(bv.shape()));
  const std::size_t m = av.cols(), k = av.rows(), n = bv.cols();
  Tensor out(matmul_shape(av, bv, m, n));
  kernels::gemm(Trans::yes, Trans::no, m, n, k, 1.0, av.data(), bv.data(), 0.0, out.data());
  return t.record(std::move(out), {a, b}, [a, b, m, n, k](Tape& tp, const Tensor& g) {
    // dA (k x m) = B g^T ; dB (k x n) = A g
    if (tp.requires_grad(a))
      kernels::gemm(Trans::no, Trans::yes, k, m, n, 1.0, tp.value(b.id).data(), g.data(), 1.0,
                    tp.grad(a).data());
    if (tp.requires_grad(b))
      kernels::gemm(Trans::no, Trans::no, k, n, m, 1.0, tp.value(a.id).data(), g.data(), 1.0,
                    tp.grad(b).data());
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.record(a.value().transposed(), {a}, [a](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    const Tensor gt = g.transposed();
    kernels::axpy(ga.size(), 1.0, gt.data(), ga.data());
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  check_same_size(a.value(), b.value(), "add");
  Tensor out = a.value();
  kernels::axpy(out.size(), 1.0, b.value().data(), out.data());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) kernels::axpy(g.size(), 1.0, g.data(), tp.grad(a).data());
    if (tp.requires_grad(b)) kernels::axpy(g.size(), 1.0, g.data(), tp.grad(b).data());
  });
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  check_same_size(a.value(), b.value(), "sub");
  Tensor out = a.value();
  kernels::axpy(out.size(), -1.0, b.value().data(), out.data());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) kernels::axpy(g.size(), 1.0, g.data(), tp.grad(a).data());
    if (tp.requires_grad(b)) kernels::axpy(g.size(), -1.0, g.data(), tp.grad(b).data());
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = s * a.value();
  return t.record(std::move(out), {a}, [a, s](Tape& tp, const Tensor& g) {
    kernels::axpy(g.size(), s, g.data(), tp.grad(a).data());
  });
}

Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  check_same_size(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad(a);
      const double* bv2 = tp.value(b.id).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      const double* av2 = tp.value(a.id).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  Tape& t = *parts.front().tape;
  const bool vectors = std::all_of(parts.begin(), parts.end(), [](const Var& v) { return v.value().rank() == 1; });
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != cols) throw std::invalid_argument("concat: column mismatch");
    rows += p.value().rows();
  }
  Tensor out = vectors ? Tensor({rows}) : Tensor({rows, cols});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().storage().begin(), p.value().storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  return t.record(std::move(out), parts, [parts, offsets](Tape& tp, const Tensor& g) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!tp.requires_grad(parts[i])) continue;
      Tensor& gp = tp.grad(parts[i]);
      kernels::axpy(gp.size(), 1.0, g.data() + offsets[i], gp.data());
    }
  });
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (begin > end || end > av.rows()) throw std::invalid_argument("slice: range out of bounds");
  const std::size_t cols = av.cols();
  Tensor out = av.rank() == 1 ? Tensor({end - begin}) : Tensor({end - begin, cols});
  std::copy(av.data() + begin * cols, av.data() + end * cols, out.data());
  return t.record(std::move(out), {a}, [a, begin, cols](Tape& tp, const Tensor& g) {
    kernels::axpy(g.size(), 1.0, g.data(), tp.grad(a).data() + begin * cols);
  });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tape& t = *a.tape;
  return t.record(a.value().reshaped(std::move(shape)), {a}, [a](Tape& tp, const Tensor& g) {
    kernels::axpy(g.size(), 1.0, g.data(), tp.grad(a).data());
  });
}

Var gelu(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (auto& v : out.values()) v = gelu_value(v);
  return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    const Tensor& x = tp.value(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_derivative(x[i]);
  });
}

Var gelu_prime(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (auto& v : out.values()) v = gelu_derivative(v);
  return t.record(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    const Tensor& x = tp.value(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_second_derivative(x[i]);
  });
}

Var exp(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  const int out_id = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [a, out_id](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    const Tensor& y = tp.value(out_id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var linear_solve(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows();
  if (av.cols() != n || bv.rows() != n) throw std::invalid_argument("linear_solve: shape mismatch");
  auto factor = std::make_shared<std::vector<double>>(av.storage());
  kernels::cholesky(factor->data(), n);
  Tensor x = bv;
  const std::size_t nrhs = bv.cols();
  kernels::cholesky_solve(factor->data(), n, x.data(), nrhs);
  const int out_id = static_cast<int>(t.size());
  return t.record(std::move(x), {a, b}, [a, b, factor, n, nrhs, out_id](Tape& tp, const Tensor& g) {
    Tensor gb = g;
    kernels::cholesky_solve(factor->data(), n, gb.data(), nrhs);
    if (tp.requires_grad(b)) kernels::axpy(gb.size(), 1.0, gb.data(), tp.grad(b).data());
    if (tp.requires_grad(a)) {
      // dA = -sym(gb x^T)
      const Tensor& x2 = tp.value(out_id);
      Tensor outer({n, n});
      kernels::gemm(Trans::no, Trans::yes, n, n, nrhs, 1.0, gb.data(), x2.data(), 0.0, outer.data());
      Tensor& ga = tp.grad(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) ga(i, j) -= 0.5 * (outer(i, j) + outer(j, i));
    }
  });
}

Var mse(Var a, Var b) {
  Tape& t = *a.tape;
  check_same_size(a.value(), b.value(), "mse");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  return t.record(Tensor({1}, std::vector<double>{s / static_cast<double>(n)}), {a, b},
                  [a, b, n](Tape& tp, const Tensor& g) {
                    const Tensor& x = tp.value(a.id);
                    const Tensor& y = tp.value(b.id);
                    const double c = 2.0 * g[0] / static_cast<double>(n);
                    if (tp.requires_grad(a)) {
                      Tensor& ga = tp.grad(a);
                      for (std::size_t i = 0; i < n; ++i) ga[i] += c * (x[i] - y[i]);
                    }
                    if (tp.requires_grad(b)) {
                      Tensor& gb = tp.grad(b);
                      for (std::size_t i = 0; i < n; ++i) gb[i] -= c * (x[i] - y[i]);
                    }
                  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record(Tensor({1}, std::vector<double>{s}), {a}, [a](Tape& tp, const Tensor& g) {
    for (auto& v : tp.grad(a).values()) v += g[0];
  });
}

Var sum_squares(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  return t.record(Tensor({1}, std::vector<double>{s}), {a}, [a](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad(a);
    const Tensor& x = tp.value(a.id);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * g[0] * x[i];
  });
}

Var add_row(Var x, Var b) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (b.value().size() != cols) throw std::invalid_argument("add_row: bias length mismatch");
  Tensor out = xv;
  for (std::size_t i = 0; i < rows; ++i) kernels::axpy(cols, 1.0, b.value().data(), out.data() + i * cols);
  return t.record(std::move(out), {x, b}, [x, b, rows, cols](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(x)) kernels::axpy(g.size(), 1.0, g.data(), tp.grad(x).data());
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < rows; ++i) kernels::axpy(cols, 1.0, g.data() + i * cols, gb.data());
    }
  });
}

Var tile_rows(Var x, std::size_t times) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const std::size_t block = xv.size();
  Tensor out({xv.rows() * times, xv.cols()});
  for (std::size_t r = 0; r < times; ++r) std::copy(xv.data(), xv.data() + block, out.data() + r * block);
  return t.record(std::move(out), {x}, [x, times, block](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad(x);
    for (std::size_t r = 0; r < times; ++r) kernels::axpy(block, 1.0, g.data() + r * block, gx.data());
  });
}

Var diag(Var v) {
  Tape& t = *v.tape;
  const std::size_t n = v.value().size();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out(i, i) = v.value()[i];
  return t.record(std::move(out), {v}, [v, n](Tape& tp, const Tensor& g) {
    Tensor& gv = tp.grad(v);
    for (std::size_t i = 0; i < n; ++i) gv[i] += g(i, i);
  });
}

Var add_diag(Var m, Var v) {
  Tape& t = *m.tape;
  const std::size_t n = m.value().rows();
  if (m.value().cols() != n || v.value().size() != n) throw std::invalid_argument("add_diag: shape mismatch");
  Tensor out = m.value();
  for (std::size_t i = 0; i < n; ++i) out(i, i) += v.value()[i];
  return t.record(std::move(out), {m, v}, [m, v, n](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(m)) kernels::axpy(g.size(), 1.0, g.data(), tp.grad(m).data());
    if (tp.requires_grad(v)) {
      Tensor& gv = tp.grad(v);
      for (std::size_t i = 0; i < n; ++i) gv[i] += g(i, i);
    }
  });
}

Var symmetrize(Var m) {
  Tape& t = *m.tape;
  const Tensor& mv = m.value();
  const std::size_t n = mv.rows();
  if (mv.cols() != n) throw std::invalid_argument("symmetrize: matrix not square");
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = 0.5 * (mv(i, j) + mv(j, i));
  return t.record(std::move(out), {m}, [m, n](Tape& tp, const Tensor& g) {
    Tensor& gm = tp.grad(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) gm(i, j) += 0.5 * (g(i, j) + g(j, i));
  });
}

Var depthwise_mix(Var x, Var kernel, std::size_t slots) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const std::size_t ch = xv.cols();
  if (xv.rows() % slots != 0 || kv.rows() != ch || kv.cols() != slots * slots)
    throw std::invalid_argument("depthwise_mix: shape mismatch");
  const std::size_t blocks = xv.rows() / slots;
  Tensor out({xv.rows(), ch});
  for (std::size_t b = 0; b < blocks; ++b) {
    const double* xb = xv.data() + b * slots * ch;
    double* ob = out.data() + b * slots * ch;
    for (std::size_t i = 0; i < slots; ++i)
      for (std::size_t k = 0; k < slots; ++k)
        for (std::size_t j = 0; j < ch; ++j) ob[i * ch + j] += kv[j * slots * slots + i * slots + k] * xb[k * ch + j];
  }
  return t.record(std::move(out), {x, kernel}, [x, kernel, slots, ch, blocks](Tape& tp, const Tensor& g) {
    const Tensor& xv2 = tp.value(x.id);
    const Tensor& kv2 = tp.value(kernel.id);
    const bool want_x = tp.requires_grad(x);
    const bool want_k = tp.requires_grad(kernel);
    Tensor* gx = want_x ? &tp.grad(x) : nullptr;
    Tensor* gk = want_k ? &tp.grad(kernel) : nullptr;
    for (std::size_t b = 0; b < blocks; ++b) {
      const double* xb = xv2.data() + b * slots * ch;
      const double* gb = g.data() + b * slots * ch;
      for (std::size_t i = 0; i < slots; ++i)
        for (std::size_t k = 0; k < slots; ++k)
          for (std::size_t j = 0; j < ch; ++j) {
            const std::size_t kidx = j * slots * slots + i * slots + k;
            if (want_x) (*gx)[b * slots * ch + k * ch + j] += kv2[kidx] * gb[i * ch + j];
            if (want_k) (*gk)[kidx] += gb[i * ch + j] * xb[k * ch + j];
          }
    }
  });
}

// ---- gradient check --------------------------------------------------------

GradCheckReport finite_diff_check(const std::function<Var(Tape&)>& loss_fn,
                                  std::span<Parameter* const> params, double h) {
  if (!(h >= 1e-7 && h <= 1e-4)) throw std::invalid_argument("finite_diff_check: h must lie in [1e-7, 1e-4]");
  for (Parameter* p : params) p->grad = Tensor(p->value.shape());
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape tape;
    return loss_fn(tape).value()[0];
  };
  GradCheckReport report;
  for (Parameter* p : params) {
    if (p->frozen) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double fp = evaluate();
      p->value[i] = saved - h;
      const double fm = evaluate();
      p->value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace kaliko::ad
