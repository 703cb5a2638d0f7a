#include "temp/model/dataset.hpp"

#include <numeric>
#include <stdexcept>

namespace temp::model {

std::span<const float> LabeledSamples::sample(std::size_t i) const {
  const std::size_t n = sample_numel();
  if (i >= size()) throw std::out_of_range("sample index out of range");
  return std::span<const float>(data).subspan(i * n, n);
}

void LabeledSamples::append(std::span<const float> values, int label) {
  if (values.size() != sample_numel()) throw std::invalid_argument("sample has the wrong number of values");
  data.insert(data.end(), values.begin(), values.end());
  labels.push_back(label);
}

diff::Tensor LabeledSamples::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw std::invalid_argument("cannot build an empty batch");
  const std::size_t n = sample_numel();
  std::vector<float> values;
  values.reserve(indices.size() * n);
  for (std::size_t i : indices) {
    auto s = sample(i);
    values.insert(values.end(), s.begin(), s.end());
  }
  diff::Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  return diff::Tensor::from(std::move(shape), std::move(values));
}

diff::Tensor LabeledSamples::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  return batch(idx);
}

std::vector<int> LabeledSamples::labels_of(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

}  // namespace temp::model
