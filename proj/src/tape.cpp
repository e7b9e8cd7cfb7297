#include "curlyfm/tape.hpp"

#include "curlyfm/errors.hpp"
#include "curlyfm/kernels.hpp"

namespace curlyfm {

namespace {

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw DimensionError(std::string("tape ") + op + ": shape mismatch");
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

}  // namespace

Var GradTape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Var GradTape::push(Matrix value, std::vector<std::size_t> inputs, std::vector<Pullback> pullbacks) {
  Node n;
  n.value = std::move(value);
  for (std::size_t in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.pullbacks = std::move(pullbacks);
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Matrix GradTape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void GradTape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) n.grad.data()[i] += g.data()[i];
}

Var GradTape::matmul_nt(Var a, Var w) {
  const Matrix& av = value(a);
  const Matrix& wv = value(w);
  Matrix out = kernels::gemm_nt(av, wv);
  const bool ga = requires_grad(a), gw = requires_grad(w);
  std::vector<Pullback> pb(2);
  if (ga) pb[0] = [this, w](const Matrix& g) { return kernels::gemm_nn(g, value(w)); };
  if (gw) pb[1] = [this, a](const Matrix& g) { return kernels::gemm_tn(g, value(a)); };
  return push(std::move(out), {a.id, w.id}, std::move(pb));
}

Var GradTape::add_row(Var a, Var bias) {
  const Matrix& av = value(a);
  const Matrix& bv = value(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw DimensionError("tape add_row: bias shape mismatch");
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
  std::vector<Pullback> pb(2);
  pb[0] = [](const Matrix& g) { return g; };
  pb[1] = [](const Matrix& g) {
    Matrix s(1, g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) s(0, c) += g(r, c);
    return s;
  };
  return push(std::move(out), {a.id, bias.id}, std::move(pb));
}

Var GradTape::add(Var a, Var b) {
  require_same(value(a), value(b), "add");
  Matrix out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += value(b).data()[i];
  auto id = [](const Matrix& g) { return g; };
  return push(std::move(out), {a.id, b.id}, {id, id});
}

Var GradTape::sub(Var a, Var b) {
  require_same(value(a), value(b), "sub");
  Matrix out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= value(b).data()[i];
  Pullback neg = [](const Matrix& g) {
    Matrix n = g;
    for (double& v : n.values()) v = -v;
    return n;
  };
  return push(std::move(out), {a.id, b.id}, {[](const Matrix& g) { return g; }, neg});
}

Var GradTape::mul(Var a, Var b) {
  require_same(value(a), value(b), "mul");
  Matrix out = hadamard(value(a), value(b));
  std::vector<Pullback> pb(2);
  pb[0] = [this, b](const Matrix& g) { return hadamard(g, value(b)); };
  pb[1] = [this, a](const Matrix& g) { return hadamard(g, value(a)); };
  return push(std::move(out), {a.id, b.id}, std::move(pb));
}

Var GradTape::scale(Var a, double c) {
  Matrix out = value(a);
  for (double& v : out.values()) v *= c;
  return push(std::move(out), {a.id}, {[c](const Matrix& g) {
                Matrix s = g;
                for (double& v : s.values()) v *= c;
                return s;
              }});
}

Var GradTape::scale_rows(Var a, std::vector<double> s) {
  const Matrix& av = value(a);
  if (s.size() != av.rows()) throw DimensionError("tape scale_rows: one factor per row expected");
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& v : out.row(r)) v *= s[r];
  return push(std::move(out), {a.id}, {[s = std::move(s)](const Matrix& g) {
                Matrix o = g;
                for (std::size_t r = 0; r < o.rows(); ++r)
                  for (double& v : o.row(r)) v *= s[r];
                return o;
              }});
}

Var GradTape::activation(Var z, Activation act) {
  Matrix out = value(z);
  for (double& v : out.values()) v = activate(act, v);
  return push(std::move(out), {z.id}, {[this, z, act](const Matrix& g) {
                Matrix o = g;
                const Matrix& zv = value(z);
                for (std::size_t i = 0; i < o.size(); ++i) o.data()[i] *= activate_d1(act, zv.data()[i]);
                return o;
              }});
}

Var GradTape::activation_d1(Var z, Activation act) {
  if (!is_smooth(act)) throw ConfigError("activation derivative on tape needs a smooth activation");
  Matrix out = value(z);
  for (double& v : out.values()) v = activate_d1(act, v);
  return push(std::move(out), {z.id}, {[this, z, act](const Matrix& g) {
                Matrix o = g;
                const Matrix& zv = value(z);
                for (std::size_t i = 0; i < o.size(); ++i) o.data()[i] *= activate_d2(act, zv.data()[i]);
                return o;
              }});
}

Var GradTape::detach(Var a) { return leaf(value(a), false); }

Var GradTape::weighted_sqnorm(Var a, std::vector<double> w) {
  const Matrix& av = value(a);
  if (w.size() != av.rows()) throw DimensionError("tape weighted_sqnorm: one weight per row expected");
  double total = 0.0;
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (double v : av.row(r)) s += v * v;
    total += w[r] * s;
  }
  return push(Matrix(1, 1, total), {a.id}, {[this, a, w = std::move(w)](const Matrix& g) {
                const double gs = g(0, 0);
                Matrix o = value(a);
                for (std::size_t r = 0; r < o.rows(); ++r)
                  for (double& v : o.row(r)) v *= 2.0 * w[r] * gs;
                return o;
              }});
}

Var GradTape::custom(Var in, Matrix value, Pullback pullback) {
  return push(std::move(value), {in.id}, {std::move(pullback)});
}

void GradTape::backward(Var loss) {
  Node& root = nodes_.at(loss.id);
  if (root.value.rows() != 1 || root.value.cols() != 1)
    throw ContractError("backward needs a scalar (1 x 1) loss node");
  for (auto& n : nodes_) n.grad = Matrix();
  root.grad = Matrix(1, 1, 1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.requires_grad || n.pullbacks.empty()) continue;
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const std::size_t in = n.inputs[k];
      if (!nodes_[in].requires_grad || !n.pullbacks[k]) continue;
      Matrix g = n.pullbacks[k](n.grad);
      accumulate(in, g);
    }
  }
}

BoundMlp bind(GradTape& tape, const Mlp& net, bool trainable) {
  BoundMlp b;
  b.net = &net;
  for (const auto& layer : net.layers()) {
    b.weights.push_back(tape.leaf(layer.weight, trainable));
    b.biases.push_back(tape.leaf(layer.bias, trainable));
  }
  return b;
}

Var forward(GradTape& tape, const BoundMlp& net, Var input) {
  if (tape.value(input).cols() != net.net->input_dim()) throw DimensionError("bound mlp: input width mismatch");
  Var a = input;
  const std::size_t n_layers = net.weights.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Var z = tape.add_row(tape.matmul_nt(a, net.weights[l]), net.biases[l]);
    a = l + 1 < n_layers ? tape.activation(z, net.net->activation()) : z;
  }
  return a;
}

DualVars forward_dual(GradTape& tape, const BoundMlp& net, Var input) {
  const Matrix& in = tape.value(input);
  if (in.cols() != net.net->input_dim()) throw DimensionError("bound mlp: input width mismatch");
  const Activation act = net.net->activation();
  if (!is_smooth(act)) throw ConfigError("time derivative needs a smooth activation, got " + to_string(act));
  Matrix seed(in.rows(), in.cols());
  for (std::size_t r = 0; r < in.rows(); ++r) seed(r, in.cols() - 1) = 1.0;
  Var a = input;
  Var adot = tape.constant(std::move(seed));
  const std::size_t n_layers = net.weights.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Var z = tape.add_row(tape.matmul_nt(a, net.weights[l]), net.biases[l]);
    Var zdot = tape.matmul_nt(adot, net.weights[l]);
    if (l + 1 < n_layers) {
      a = tape.activation(z, act);
      adot = tape.mul(tape.activation_d1(z, act), zdot);
    } else {
      a = z;
      adot = zdot;
    }
  }
  return {a, adot};
}

std::vector<double> flat_gradient(const GradTape& tape, const BoundMlp& net) {
  std::vector<double> flat;
  flat.reserve(net.net->parameter_count());
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Matrix gw = tape.grad(net.weights[l]);
    const Matrix gb = tape.grad(net.biases[l]);
    flat.insert(flat.end(), gw.values().begin(), gw.values().end());
    flat.insert(flat.end(), gb.values().begin(), gb.values().end());
  }
  return flat;
}

}  // namespace curlyfm
