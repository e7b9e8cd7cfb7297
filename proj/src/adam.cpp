#include "curlyfm/adam.hpp"

#include <cmath>

#include "curlyfm/errors.hpp"

namespace curlyfm {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const std::function<std::string(std::size_t)>& name_of) {
  if (params.size() != grads.size() || params.size() != state.first_.size())
    throw DimensionError("adam: parameter, gradient and state sizes differ");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw TrainingError("non-finite gradient for parameter " +
                          (name_of ? name_of(i) : "#" + std::to_string(i)));

  const AdamConfig& c = state.config_;
  ++state.steps_;
  const double step = static_cast<double>(state.steps_);
  const double bias1 = 1.0 - std::pow(c.beta1, step);
  const double bias2 = 1.0 - std::pow(c.beta2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.first_[i] = c.beta1 * state.first_[i] + (1.0 - c.beta1) * g;
    state.second_[i] = c.beta2 * state.second_[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.first_[i] / bias1;
    const double v_hat = state.second_[i] / bias2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

void adam_step(AdamState& state, Mlp& net, std::span<const double> grads) {
  std::vector<double> flat = net.flat_parameters();
  adam_step(state, flat, grads, [&net](std::size_t i) { return net.parameter_name(i); });
  net.set_flat_parameters(flat);
}

}  // namespace curlyfm
