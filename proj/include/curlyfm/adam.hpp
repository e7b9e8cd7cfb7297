#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "curlyfm/mlp.hpp"

namespace curlyfm {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t n_params, AdamConfig config)
      : config_(config), first_(n_params, 0.0), second_(n_params, 0.0) {}

  const AdamConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }
  const std::vector<double>& first_moment() const { return first_; }
  const std::vector<double>& second_moment() const { return second_; }

 private:
  friend void adam_step(AdamState&, std::span<double>, std::span<const double>,
                        const std::function<std::string(std::size_t)>&);
  AdamConfig config_;
  std::size_t steps_ = 0;
  std::vector<double> first_;
  std::vector<double> second_;
};

/// One bias-corrected adaptive-moment update in place. A non-finite gradient
/// raises TrainingError naming the parameter (via name_of when given).
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const std::function<std::string(std::size_t)>& name_of = {});

/// Updates an Mlp's parameters from a flat gradient.
void adam_step(AdamState& state, Mlp& net, std::span<const double> grads);

}  // namespace curlyfm
