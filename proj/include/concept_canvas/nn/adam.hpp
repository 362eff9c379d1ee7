#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "concept_canvas/nn/layers.hpp"

namespace canvas::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. State layout follows the slot sizes given at
// construction, so it can be checkpointed alongside the weights it updates.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, const std::vector<std::size_t>& slot_sizes);
  static Adam for_params(AdamConfig config, const std::vector<Param*>& params);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }

  void step(const std::vector<Param*>& params, const Gradients& grads);
  void step(std::span<double> values, std::span<const double> grad);  // single slot

  // Exposed for checkpointing.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  void update_slot(std::size_t slot, std::span<double> values, std::span<const double> grad, double lr_t);

  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

}  // namespace canvas::nn
