#pragma once

#include <span>

#include "temp/diff/tensor.hpp"

namespace temp::model {

/// Mean over the batch of -log softmax(logits)[label]. Labels must lie in
/// [0, C).
diff::Tensor cross_entropy_loss(const diff::Tensor& logits, std::span<const int> labels);

/// Batch-hard softmax-triplet loss on L2-normalized features:
/// mean over anchors of -log(e^{-d_ap} / (e^{-d_ap} + e^{-d_an})) with d_ap the
/// farthest positive and d_an the nearest negative (Euclidean distance).
/// Every anchor needs at least one positive and one negative.
diff::Tensor softmax_triplet_loss(const diff::Tensor& features, std::span<const int> labels);

}  // namespace temp::model
