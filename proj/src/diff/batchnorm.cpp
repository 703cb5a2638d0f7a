#include "temp/diff/batchnorm.hpp"

#include <cmath>
#include <string>

namespace temp::diff {

BnState BnState::identity(std::size_t channels, float epsilon) {
  BnState bn;
  bn.gamma = Tensor::full({channels}, 1.0f, true);
  bn.beta = Tensor::zeros({channels}, true);
  bn.running_mean.assign(channels, 0.0f);
  bn.running_var.assign(channels, 1.0f);
  bn.epsilon = epsilon;
  return bn;
}

Tensor batchnorm(const Tensor& x, const BnState& bn, BnMode mode, BatchMoments* moments) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw std::invalid_argument("batchnorm: expected N x C or N x C x H x W, got " + shape_string(x.shape()));
  }
  const std::size_t N = x.dim(0), C = x.dim(1);
  const std::size_t S = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (C != bn.channels() || bn.gamma.numel() != C || bn.beta.numel() != C) {
    throw std::invalid_argument("batchnorm: input has " + std::to_string(C) + " channels, layer has " +
                                std::to_string(bn.channels()));
  }
  const std::size_t M = N * S;
  if (mode == BnMode::BatchStats && M < 2) {
    throw DegenerateBatchError("batchnorm: batch statistics need more than one value per channel (N=" +
                               std::to_string(N) + ")");
  }

  auto xv = x.values();
  std::vector<float> mu(C), inv_std(C);
  if (mode == BnMode::RunningStats) {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = bn.running_mean[c];
      inv_std[c] = 1.0f / std::sqrt(bn.running_var[c] + bn.epsilon);
    }
  } else {
    std::vector<float> var(C);
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < S; ++i) s += xv[(n * C + c) * S + i];
      const double m = s / static_cast<double>(M);
      double ss = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < S; ++i) {
          const double d = xv[(n * C + c) * S + i] - m;
          ss += d * d;
        }
      mu[c] = static_cast<float>(m);
      var[c] = static_cast<float>(ss / static_cast<double>(M));
      inv_std[c] = static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(M) + bn.epsilon));
    }
    if (moments) *moments = BatchMoments{mu, var, M};
  }

  auto gv = bn.gamma.values();
  auto bv = bn.beta.values();
  std::vector<float> xhat(x.numel());
  std::vector<float> out(x.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t idx = (n * C + c) * S + i;
        xhat[idx] = (xv[idx] - mu[c]) * inv_std[c];
        out[idx] = gv[c] * xhat[idx] + bv[c];
      }

  const bool batch_mode = mode == BnMode::BatchStats;
  return Tensor::make_result(
      x.shape(), std::move(out), {x, bn.gamma, bn.beta},
      [N, C, S, M, batch_mode, inv_std = std::move(inv_std), xhat = std::move(xhat)](detail::Node& self) {
        detail::Node& X = *self.inputs[0];
        detail::Node& G = *self.inputs[1];
        detail::Node& B = *self.inputs[2];
        const auto& dy = self.grad;
        std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < S; ++i) {
              const std::size_t idx = (n * C + c) * S + i;
              sum_dy[c] += dy[idx];
              sum_dy_xhat[c] += static_cast<double>(dy[idx]) * xhat[idx];
            }
        if (G.requires_grad) {
          auto& gg = G.grad_buffer();
          for (std::size_t c = 0; c < C; ++c) gg[c] += static_cast<float>(sum_dy_xhat[c]);
        }
        if (B.requires_grad) {
          auto& gb = B.grad_buffer();
          for (std::size_t c = 0; c < C; ++c) gb[c] += static_cast<float>(sum_dy[c]);
        }
        if (!X.requires_grad) return;
        auto& gx = X.grad_buffer();
        const double inv_m = 1.0 / static_cast<double>(M);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c) {
            const float scale = G.value[c] * inv_std[c];
            for (std::size_t i = 0; i < S; ++i) {
              const std::size_t idx = (n * C + c) * S + i;
              if (batch_mode) {
                const double centered = dy[idx] - sum_dy[c] * inv_m - xhat[idx] * sum_dy_xhat[c] * inv_m;
                gx[idx] += static_cast<float>(scale * centered);
              } else {
                gx[idx] += scale * dy[idx];
              }
            }
          }
      });
}

void update_running_stats(BnState& bn, const BatchMoments& moments, float momentum) {
  if (moments.mean.size() != bn.channels() || moments.var.size() != bn.channels()) {
    throw std::invalid_argument("update_running_stats: channel count mismatch");
  }
  if (!(momentum > 0.0f && momentum <= 1.0f)) throw std::invalid_argument("update_running_stats: momentum in (0, 1]");
  const float correction =
      moments.count > 1 ? static_cast<float>(moments.count) / static_cast<float>(moments.count - 1) : 1.0f;
  for (std::size_t c = 0; c < bn.channels(); ++c) {
    bn.running_mean[c] = (1.0f - momentum) * bn.running_mean[c] + momentum * moments.mean[c];
    bn.running_var[c] = (1.0f - momentum) * bn.running_var[c] + momentum * moments.var[c] * correction;
  }
}

}  // namespace temp::diff
