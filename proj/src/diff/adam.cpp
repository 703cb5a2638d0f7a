#include "temp/diff/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace temp::diff {

AdamState AdamState::with(float learning_rate, float weight_decay) {
  if (!(learning_rate >= 0.0f)) throw std::invalid_argument("Adam learning rate must be nonnegative");
  if (!(weight_decay >= 0.0f)) throw std::invalid_argument("Adam weight decay must be nonnegative");
  AdamState s;
  s.learning_rate = learning_rate;
  s.weight_decay = weight_decay;
  return s;
}

void adam_step(std::span<Tensor> params, const std::vector<bool>& trainable, AdamState& state) {
  if (params.size() != trainable.size()) throw std::invalid_argument("adam_step: mask size mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: optimizer bound to other parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (trainable[i] && !params[i].has_grad()) {
      throw std::logic_error("adam_step: trainable parameter " + std::to_string(i) + " has no gradient");
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), t));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!trainable[i]) continue;
    Tensor& p = params[i];
    auto values = p.mutable_values();
    auto grad = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.empty()) {
      m.assign(values.size(), 0.0f);
      v.assign(values.size(), 0.0f);
    }
    for (std::size_t j = 0; j < values.size(); ++j) {
      const float g = grad[j] + state.weight_decay * values[j];
      m[j] = state.beta1 * m[j] + (1.0f - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0f - state.beta2) * g * g;
      const float m_hat = m[j] / bc1;
      const float v_hat = v[j] / bc2;
      values[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace temp::diff
