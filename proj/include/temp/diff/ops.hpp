#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "temp/diff/tensor.hpp"

// Differentiable primitives. Matrices are rank-2 row-major tensors, images
// are rank-4 N x C x H x W tensors.
namespace temp::diff::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
/// factor * a + shift, elementwise.
Tensor affine(const Tensor& a, float factor, float shift);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// m x n -> m
Tensor sum_rows(const Tensor& a);

/// [m x k] . [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m x k] . [n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x [N x in], weight [out x in], bias [out] (bias may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Stride 1, zero "same" padding, odd square kernel. weight [O x C x k x k].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);

/// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
Tensor avg_pool2x2(const Tensor& x);
/// N x C x H x W -> N x C
Tensor global_avg_pool(const Tensor& x);

/// Each row divided by max(||row||_2, eps).
Tensor l2_normalize_rows(const Tensor& x, float eps = 1e-12f);

/// out[i][j] = x[i][indices[i * k + j]]; indices are constants.
Tensor gather_columns(const Tensor& x, std::span<const std::size_t> indices, std::size_t k);

Tensor softmax_rows(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);

/// Euclidean distance between every pair of rows, sqrt(max(d^2, 1e-12)).
Tensor pairwise_distance(const Tensor& x);

/// sum_i (a_i - reference_i)^2 with the reference held constant.
Tensor squared_distance(const Tensor& a, std::span<const float> reference);

}  // namespace temp::diff::ops
