#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kaliko/tensor.hpp"

namespace kaliko::ad {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// A named trainable tensor with its accumulated gradient.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  /// Frozen parameters enter tapes as constants and never receive gradient.
  bool frozen = false;

  void zero_grad() { grad.fill(0.0); }
};

/// Raised by backward() when a parameter gradient contains NaN or Inf.
class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& parameter, const std::string& what)
      : std::runtime_error(what), parameter_(parameter) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

/// Linear record of a forward computation. Nodes are appended in creation
/// order, which is a topological order, so backward walks them in reverse.
class Tape {
 public:
  Tape() = default;
  /// With record_gradients = false, parameters bind as constants and no
  /// backward closures are kept (inference).
  explicit Tape(bool record_gradients) : record_gradients_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. Repeated calls reuse the same node.
  Var param(Parameter& p);
  /// Appends an op node. The backward function is only kept when some parent
  /// requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }
  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad(int id);
  Tensor& grad(Var v) { return grad(v.id); }
  bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }

  /// Computes node gradients of a scalar loss, adds them into every bound
  /// parameter's gradient, then checks them for NaN/Inf.
  void backward(Var loss);
  /// Node gradients only; parameters are left untouched.
  void compute_gradients(Var loss);
  void accumulate_parameter_gradients(double scale = 1.0) const;
  /// (parameter, gradient) pairs from the last compute_gradients call.
  std::vector<std::pair<Parameter*, Tensor>> parameter_gradients() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Var push(Node node);

  bool record_gradients_ = true;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> bound_;
};

// ---- forward ops -----------------------------------------------------------
// Rank-1 operands act as column vectors.

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// a^T * b
Var matmul_tn(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var mul(Var a, Var b);
/// Stacks operands along rows; all must share the column count.
Var concat(const std::vector<Var>& parts);
/// Rows [begin, end) of a matrix, or entries [begin, end) of a vector.
Var slice(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, std::vector<std::size_t> shape);
/// Exact GELU, x * Phi(x).
Var gelu(Var a);
/// Derivative of exact GELU, used to build decoder Jacobians on the tape.
Var gelu_prime(Var a);
Var exp(Var a);
/// Solves A X = B for symmetric positive-definite A. Only the symmetric part
/// of A is read, so the A-gradient is symmetric.
Var linear_solve(Var a, Var b);
Var mse(Var a, Var b);
Var sum(Var a);
Var sum_squares(Var a);
/// X + 1 b^T : adds a row vector b to every row of X.
Var add_row(Var x, Var b);
/// Stacks `times` copies of X vertically.
Var tile_rows(Var x, std::size_t times);
Var diag(Var v);
/// M + diag(v)
Var add_diag(Var m, Var v);
/// (M + M^T) / 2
Var symmetrize(Var m);
/// Per-channel mixing across slots. X holds `blocks` stacked groups of
/// `slots` rows; kernel is (channels, slots*slots) with
/// out[b,i][j] = sum_k kernel[j][i*slots+k] * X[b,k][j].
Var depthwise_mix(Var x, Var kernel, std::size_t slots);

// ---- scalar helpers --------------------------------------------------------

double gelu_value(double x);
double gelu_derivative(double x);
double gelu_second_derivative(double x);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference check of every scalar coordinate of `params` against
/// the tape gradient of `loss_fn`. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) in the denominator. Parameter gradients
/// are zeroed before and left holding the analytic gradient afterwards.
GradCheckReport finite_diff_check(const std::function<Var(Tape&)>& loss_fn,
                                  std::span<Parameter* const> params, double h);

}  // namespace kaliko::ad
