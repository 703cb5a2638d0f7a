#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "temp/diff/tensor.hpp"

namespace temp::diff {

struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  float learning_rate = 3.5e-4f;
  float weight_decay = 0.0f;

  static AdamState with(float learning_rate, float weight_decay = 0.0f);
};

/// One bias-corrected Adam update over params[i] where trainable[i] is set.
/// Weight decay is added to the gradient as an L2 term. Masked parameters
/// are not touched; a trainable parameter without a gradient is an error.
void adam_step(std::span<Tensor> params, const std::vector<bool>& trainable, AdamState& state);

}  // namespace temp::diff
