#pragma once

#include <stdexcept>
#include <vector>

#include "temp/diff/tensor.hpp"

namespace temp::diff {

/// Raised when batch statistics are requested from a batch that cannot
/// provide them (a single non-spatial sample).
class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BnMode { RunningStats, BatchStats };

/// Per-channel affine parameters plus frozen running moments of one
/// batch-normalization layer. gamma and beta are shared handles into the
/// owning parameter set.
struct BnState {
  Tensor gamma;
  Tensor beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-5f;

  static BnState identity(std::size_t channels, float epsilon = 1e-5f);
  std::size_t channels() const { return running_mean.size(); }
};

/// Moments measured on one batch. var is the biased (normalizing) variance;
/// count is the number of values per channel.
struct BatchMoments {
  std::vector<float> mean;
  std::vector<float> var;
  std::size_t count = 0;
};

/// gamma * (x - mu) / sqrt(var + eps) + beta over the channel axis (axis 1)
/// of an N x C or N x C x H x W input. Never writes the running buffers.
/// In BatchStats mode the measured moments are copied to *moments when given.
Tensor batchnorm(const Tensor& x, const BnState& bn, BnMode mode, BatchMoments* moments = nullptr);

/// running <- (1 - momentum) * running + momentum * batch, using the
/// unbiased variance for the running estimate. momentum = 1 replaces.
void update_running_stats(BnState& bn, const BatchMoments& moments, float momentum);

}  // namespace temp::diff
