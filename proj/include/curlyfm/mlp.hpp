#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "curlyfm/dual.hpp"
#include "curlyfm/matrix.hpp"

namespace curlyfm {

enum class Activation { Silu, Tanh, Relu };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);
/// True when the activation is C^2; the time derivative and its gradient need that.
bool is_smooth(Activation a);

double activate(Activation a, double z);
double activate_d1(Activation a, double z);
double activate_d2(Activation a, double z);
/// {activate, activate_d1} sharing one transcendental evaluation.
std::pair<double, double> activate_with_d1(Activation a, double z);
DualScalar activate(Activation a, DualScalar z);

struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
};

/// Fully connected network. The last input slot is the time coordinate, so a
/// field over R^d is an Mlp with widths {d + 1, ..., d}.
class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero.
  Mlp(std::vector<std::size_t> widths, Activation activation);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static Mlp random(std::vector<std::size_t> widths, Activation activation, std::uint64_t seed);

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  Activation activation() const { return activation_; }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const;
  /// Layer-major: weight then bias for each layer.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);
  /// "layer<i>.weight[r,c]" / "layer<i>.bias[c]" for a flat index.
  std::string parameter_name(std::size_t flat_index) const;
  bool all_finite() const;

 private:
  std::vector<std::size_t> widths_;
  Activation activation_ = Activation::Silu;
  std::vector<DenseLayer> layers_;
};

/// x with t appended as the last column.
Matrix append_time(const Matrix& x, std::span<const double> t);

/// Evaluates the network on rows [x_r, t_r]. x must have input_dim() - 1 columns.
Matrix mlp_forward(const Mlp& net, const Matrix& x, std::span<const double> t);

/// d(output)/dt holding x fixed, by propagating DualScalar through the time input.
Matrix mlp_time_derivative(const Mlp& net, const Matrix& x, std::span<const double> t);

struct DualBatch {
  Matrix value;
  Matrix tangent;
};

/// Batched forward pass over inputs that already carry time in the last
/// column; returns outputs and their time derivatives. Same quantities as
/// mlp_forward / mlp_time_derivative, evaluated with the dense kernels.
DualBatch mlp_forward_dual(const Mlp& net, const Matrix& input);
/// Same, differentiating along input column `tangent_column` instead of time.
DualBatch mlp_forward_dual(const Mlp& net, const Matrix& input, std::size_t tangent_column);

}  // namespace curlyfm
