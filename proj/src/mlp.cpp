#include "curlyfm/mlp.hpp"

#include <cmath>

#include "curlyfm/errors.hpp"
#include "curlyfm/kernels.hpp"
#include "curlyfm/rng.hpp"

namespace curlyfm {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_widths(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw ConfigError("mlp needs at least input and output widths");
  for (std::size_t w : widths)
    if (w == 0) throw ConfigError("mlp layer width must be positive");
}

void check_input(const Mlp& net, const Matrix& x, std::span<const double> t) {
  if (x.cols() + 1 != net.input_dim())
    throw DimensionError("mlp input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(net.input_dim() - 1) + " plus time");
  if (t.size() != x.rows()) throw DimensionError("one time value per row expected");
  for (double v : t)
    if (!std::isfinite(v)) throw DomainError("non-finite time input");
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "silu") return Activation::Silu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Silu: return "silu";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  return "?";
}

bool is_smooth(Activation a) { return a != Activation::Relu; }

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Silu: return z * sigmoid(z);
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
  }
  return 0.0;
}

double activate_d1(Activation a, double z) {
  switch (a) {
    case Activation::Silu: {
      const double s = sigmoid(z);
      return s * (1.0 + z * (1.0 - s));
    }
    case Activation::Tanh: {
      const double th = std::tanh(z);
      return 1.0 - th * th;
    }
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

std::pair<double, double> activate_with_d1(Activation a, double z) {
  if (a == Activation::Silu) {
    const double s = sigmoid(z);
    return {z * s, s * (1.0 + z * (1.0 - s))};
  }
  return {activate(a, z), activate_d1(a, z)};
}

double activate_d2(Activation a, double z) {
  switch (a) {
    case Activation::Silu: {
      const double s = sigmoid(z);
      return s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s));
    }
    case Activation::Tanh: {
      const double th = std::tanh(z);
      return -2.0 * th * (1.0 - th * th);
    }
    case Activation::Relu: return 0.0;
  }
  return 0.0;
}

DualScalar activate(Activation a, DualScalar z) {
  return {activate(a, z.value), activate_d1(a, z.value) * z.tangent};
}

Mlp::Mlp(std::vector<std::size_t> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  check_widths(widths_);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l)
    layers_.push_back({Matrix(widths_[l + 1], widths_[l]), Matrix(1, widths_[l + 1])});
}

Mlp Mlp::random(std::vector<std::size_t> widths, Activation activation, std::uint64_t seed) {
  Mlp net(std::move(widths), activation);
  Rng rng(derive_seed(seed, {0x6d6c70}));
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
    for (double& b : layer.bias.values()) b = rng.uniform(-bound, bound);
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

std::vector<double> Mlp::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers_) {
    flat.insert(flat.end(), layer.weight.values().begin(), layer.weight.values().end());
    flat.insert(flat.end(), layer.bias.values().begin(), layer.bias.values().end());
  }
  return flat;
}

void Mlp::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw DimensionError("flat parameter vector has the wrong length");
  auto it = flat.begin();
  for (auto& layer : layers_) {
    std::copy(it, it + layer.weight.size(), layer.weight.values().begin());
    it += layer.weight.size();
    std::copy(it, it + layer.bias.size(), layer.bias.values().begin());
    it += layer.bias.size();
  }
}

std::string Mlp::parameter_name(std::size_t flat_index) const {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (flat_index < offset + layer.weight.size()) {
      const std::size_t k = flat_index - offset;
      return "layer" + std::to_string(l) + ".weight[" + std::to_string(k / layer.weight.cols()) + "," +
             std::to_string(k % layer.weight.cols()) + "]";
    }
    offset += layer.weight.size();
    if (flat_index < offset + layer.bias.size())
      return "layer" + std::to_string(l) + ".bias[" + std::to_string(flat_index - offset) + "]";
    offset += layer.bias.size();
  }
  throw DimensionError("parameter index out of range");
}

bool Mlp::all_finite() const {
  for (const auto& layer : layers_)
    if (!layer.weight.all_finite() || !layer.bias.all_finite()) return false;
  return true;
}

Matrix append_time(const Matrix& x, std::span<const double> t) {
  if (t.size() != x.rows()) throw DimensionError("one time value per row expected");
  Matrix out(x.rows(), x.cols() + 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r);
    auto dst = out.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
    dst[x.cols()] = t[r];
  }
  return out;
}

Matrix mlp_forward(const Mlp& net, const Matrix& x, std::span<const double> t) {
  check_input(net, x, t);
  Matrix a = append_time(x, t);
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = kernels::gemm_nt(a, layers[l].weight);
    const double* b = layers[l].bias.data();
    const bool hidden = l + 1 < layers.size();
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto zr = z.row(r);
      for (std::size_t c = 0; c < zr.size(); ++c) {
        zr[c] += b[c];
        if (hidden) zr[c] = activate(net.activation(), zr[c]);
      }
    }
    a = std::move(z);
  }
  return a;
}

Matrix mlp_time_derivative(const Mlp& net, const Matrix& x, std::span<const double> t) {
  if (!is_smooth(net.activation()))
    throw ConfigError("time derivative needs a smooth activation, got " + to_string(net.activation()));
  check_input(net, x, t);
  const auto& layers = net.layers();
  Matrix out(x.rows(), net.output_dim());
  std::vector<DualScalar> a, z;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    a.assign(x.cols() + 1, DualScalar{});
    for (std::size_t c = 0; c < x.cols(); ++c) a[c] = DualScalar(x(r, c));
    a[x.cols()] = DualScalar(t[r], 1.0);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& w = layers[l].weight;
      z.assign(w.rows(), DualScalar{});
      for (std::size_t o = 0; o < w.rows(); ++o) {
        DualScalar s;
        for (std::size_t i = 0; i < w.cols(); ++i) s += DualScalar(w(o, i)) * a[i];
        s += DualScalar(layers[l].bias(0, o));
        z[o] = l + 1 < layers.size() ? activate(net.activation(), s) : s;
      }
      a.swap(z);
    }
    for (std::size_t c = 0; c < a.size(); ++c) out(r, c) = a[c].tangent;
  }
  return out;
}

DualBatch mlp_forward_dual(const Mlp& net, const Matrix& input) {
  return mlp_forward_dual(net, input, net.input_dim() - 1);
}

DualBatch mlp_forward_dual(const Mlp& net, const Matrix& input, std::size_t tangent_column) {
  if (input.cols() != net.input_dim()) throw DimensionError("mlp_forward_dual: input width mismatch");
  if (tangent_column >= input.cols()) throw DimensionError("mlp_forward_dual: tangent column out of range");
  if (!is_smooth(net.activation()))
    throw ConfigError("time derivative needs a smooth activation, got " + to_string(net.activation()));
  const auto& layers = net.layers();
  const Activation act = net.activation();
  Matrix a = input;
  Matrix adot;  // empty means the tangent of the raw input: e_{tangent_column}
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Matrix& w = layers[l].weight;
    Matrix z = kernels::gemm_nt(a, w);
    Matrix zdot;
    if (adot.empty()) {
      zdot = Matrix(z.rows(), z.cols());
      const std::size_t tc = tangent_column;
      for (std::size_t r = 0; r < z.rows(); ++r)
        for (std::size_t c = 0; c < z.cols(); ++c) zdot(r, c) = w(c, tc);
    } else {
      zdot = kernels::gemm_nt(adot, w);
    }
    const double* b = layers[l].bias.data();
    const bool hidden = l + 1 < layers.size();
    const std::size_t n = z.rows(), m = z.cols();
    double* zp = z.data();
    double* zdp = zdot.data();
#pragma omp parallel for schedule(static) if (n >= 256)
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        const double pre = zp[r * m + c] + b[c];
        if (hidden) {
          const auto [value, slope] = activate_with_d1(act, pre);
          zp[r * m + c] = value;
          zdp[r * m + c] *= slope;
        } else {
          zp[r * m + c] = pre;
        }
      }
    }
    a = std::move(z);
    adot = std::move(zdot);
  }
  return {std::move(a), std::move(adot)};
}

}  // namespace curlyfm
