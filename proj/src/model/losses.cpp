#include "temp/model/losses.hpp"

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "temp/diff/ops.hpp"

namespace temp::model {

namespace ops = diff::ops;

diff::Tensor cross_entropy_loss(const diff::Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw std::invalid_argument("cross_entropy_loss: logits " + diff::shape_string(logits.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = logits.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(labels.size());
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("cross_entropy_loss: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    idx.push_back(static_cast<std::size_t>(y));
  }
  diff::Tensor picked = ops::gather_columns(ops::log_softmax_rows(logits), idx, 1);
  return ops::scale(ops::mean(picked), -1.0f);
}

diff::Tensor softmax_triplet_loss(const diff::Tensor& features, std::span<const int> labels) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw std::invalid_argument("softmax_triplet_loss: features/labels mismatch");
  }
  const std::size_t n = labels.size();
  diff::Tensor dist = ops::pairwise_distance(ops::l2_normalize_rows(features));
  auto d = dist.values();

  // Hard mining on values; the chosen indices are constants for the tape.
  std::vector<std::size_t> pairs(2 * n);
  for (std::size_t a = 0; a < n; ++a) {
    float hardest_pos = -1.0f, hardest_neg = std::numeric_limits<float>::infinity();
    std::size_t pos = n, neg = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const float v = d[a * n + j];
      if (labels[j] == labels[a]) {
        if (v > hardest_pos) hardest_pos = v, pos = j;
      } else if (v < hardest_neg) {
        hardest_neg = v, neg = j;
      }
    }
    if (pos == n || neg == n) {
      throw std::invalid_argument("softmax_triplet_loss: anchor " + std::to_string(a) +
                                  " lacks a positive or a negative in the batch");
    }
    pairs[2 * a] = pos;
    pairs[2 * a + 1] = neg;
  }
  diff::Tensor logits = ops::gather_columns(ops::scale(dist, -1.0f), pairs, 2);
  std::vector<std::size_t> first(n, 0);
  diff::Tensor picked = ops::gather_columns(ops::log_softmax_rows(logits), first, 1);
  return ops::scale(ops::mean(picked), -1.0f);
}

}  // namespace temp::model
