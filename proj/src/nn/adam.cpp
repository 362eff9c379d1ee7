#include "concept_canvas/nn/adam.hpp"

#include <cmath>

#include "concept_canvas/common/error.hpp"

namespace canvas::nn {

Adam::Adam(AdamConfig config, const std::vector<std::size_t>& slot_sizes) : config_(config) {
  for (auto n : slot_sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

Adam Adam::for_params(AdamConfig config, const std::vector<Param*>& params) {
  std::vector<std::size_t> sizes;
  for (const auto* p : params) sizes.push_back(p->value.size());
  return Adam(config, sizes);
}

void Adam::update_slot(std::size_t slot, std::span<double> values, std::span<const double> grad, double lr_t) {
  auto& m = m_[slot];
  auto& v = v_[slot];
  if (values.size() != m.size() || grad.size() != m.size()) {
    fail(ErrorKind::kInvalidArgument, "adam: slot " + std::to_string(slot) + " size mismatch");
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t i = 0; i < values.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
    values[i] -= lr_t * m[i] / (std::sqrt(v[i]) + config_.epsilon);
  }
}

void Adam::step(const std::vector<Param*>& params, const Gradients& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    fail(ErrorKind::kInvalidArgument, "adam: parameter list does not match optimizer state");
  }
  ++t_;
  const double lr_t = config_.learning_rate * std::sqrt(1.0 - std::pow(config_.beta2, static_cast<double>(t_))) /
                      (1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
  for (std::size_t s = 0; s < params.size(); ++s) update_slot(s, params[s]->value, grads[s], lr_t);
}

void Adam::step(std::span<double> values, std::span<const double> grad) {
  if (m_.size() != 1) fail(ErrorKind::kInvalidArgument, "adam: single-slot step on multi-slot state");
  ++t_;
  const double lr_t = config_.learning_rate * std::sqrt(1.0 - std::pow(config_.beta2, static_cast<double>(t_))) /
                      (1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
  update_slot(0, values, grad, lr_t);
}

}  // namespace canvas::nn
