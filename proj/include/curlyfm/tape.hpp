#pragma once

#include <functional>
#include <span>
#include <vector>

#include "curlyfm/matrix.hpp"
#include "curlyfm/mlp.hpp"

namespace curlyfm {

/// Handle to a node recorded on a GradTape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode recorder over batch matrices. Each op stores its primal value
/// and a pullback; backward() replays the pullbacks in reverse order and
/// accumulates adjoints. Only the ops the toolkit's losses need are provided.
class GradTape {
 public:
  using Pullback = std::function<Matrix(const Matrix& grad_out)>;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  /// Adjoint of v after backward(); zeros when nothing reached v.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul_nt(Var a, Var w);  // a * w^T
  Var add_row(Var a, Var bias);  // bias is 1 x cols, broadcast over rows
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var scale_rows(Var a, std::vector<double> s);  // row r times s[r]
  Var activation(Var z, Activation act);
  Var activation_d1(Var z, Activation act);
  /// Same value, no gradient flows back through it.
  Var detach(Var a);
  /// sum_r w[r] * ||row r||^2, a 1 x 1 node.
  Var weighted_sqnorm(Var a, std::vector<double> row_weights);
  /// Arbitrary unary op with a caller-supplied vector-Jacobian product.
  Var custom(Var in, Matrix value, Pullback pullback);

  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    // One pullback per input; may be empty for inputs that need no gradient.
    std::vector<Pullback> pullbacks;
  };

  Var push(Matrix value, std::vector<std::size_t> inputs, std::vector<Pullback> pullbacks);
  void accumulate(std::size_t id, const Matrix& g);

  std::vector<Node> nodes_;
};

/// Runs the reverse pass from a 1 x 1 loss node.
inline void backward(GradTape& tape, Var loss) { tape.backward(loss); }

/// An Mlp whose parameters live on a tape as leaves.
struct BoundMlp {
  const Mlp* net = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;
};

BoundMlp bind(GradTape& tape, const Mlp& net, bool trainable = true);

/// Input rows carry time in the last column.
Var forward(GradTape& tape, const BoundMlp& net, Var input);

struct DualVars {
  Var value;
  Var tangent;  // d(value)/d(time input)
};

DualVars forward_dual(GradTape& tape, const BoundMlp& net, Var input);

/// Gradients of a bound net flattened in Mlp::flat_parameters() order.
std::vector<double> flat_gradient(const GradTape& tape, const BoundMlp& net);

}  // namespace curlyfm
