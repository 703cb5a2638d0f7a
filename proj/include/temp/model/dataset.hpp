#pragma once

#include <span>
#include <vector>

#include "temp/diff/tensor.hpp"

namespace temp::model {

/// Flat storage for a labeled set of equally shaped samples.
struct LabeledSamples {
  diff::Shape sample_shape;
  std::vector<float> data;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_numel() const { return diff::shape_numel(sample_shape); }
  std::span<const float> sample(std::size_t i) const;
  void append(std::span<const float> values, int label);

  /// Stacks the selected samples into an N x sample_shape tensor.
  diff::Tensor batch(std::span<const std::size_t> indices) const;
  diff::Tensor all() const;
  std::vector<int> labels_of(std::span<const std::size_t> indices) const;
};

}  // namespace temp::model
