#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "temp/diff/tensor.hpp"

namespace temp::diff {

struct GradCheckOptions {
  float eps = 1e-3f;
  /// Coordinates checked per tensor; tensors at or below this size are
  /// checked exhaustively, larger ones are sampled with `seed`.
  std::size_t max_coordinates_per_tensor = 32;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares tape gradients of `loss_graph` with central differences.
///
/// The analytic side comes from one backward pass of `loss_graph`. The
/// numeric side perturbs each sampled parameter coordinate in place by
/// +-eps and evaluates `evaluate`, which must read the current parameter
/// values and return the loss. Passing a float64 evaluation of the same
/// function keeps the difference quotient above float32 rounding noise;
/// when `evaluate` is empty the tape's own forward value is used.
///
/// Error per coordinate is |a - c| / max(|a|, |c|, 1e-8). Throws
/// std::domain_error on a non-finite loss.
GradCheckReport finite_difference_check(const std::function<Tensor()>& loss_graph, std::span<Tensor> params,
                                        const GradCheckOptions& options = {},
                                        const std::function<double()>& evaluate = {});

}  // namespace temp::diff
