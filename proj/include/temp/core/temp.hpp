#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "temp/core/gallery.hpp"
#include "temp/diff/tensor.hpp"
#include "temp/model/extractor.hpp"

namespace temp::core {

enum class Selection { TopK, BottomK, TopBottom, Random };

std::string to_string(Selection s);
/// Accepts "topk", "bottomk", "topbottom", "random" (case-insensitive).
Selection parse_selection(const std::string& name);

struct TempConfig {
  std::size_t k = 50;
  float lambda = 1e-4f;
  float learning_rate = 3.5e-4f;
  Selection selection = Selection::TopK;
  std::size_t batch_size = 16;

  void validate() const;
};

/// Cosine similarity of every query row with every gallery row, m x n.
/// Query norms are guarded with max(||z||, 1e-12). Differentiable in the
/// query features; the gallery is constant.
diff::Tensor similarity_matrix(const diff::Tensor& query_features, const GalleryStore& gallery);

/// k gallery indices for one similarity row. Ties go to the lowest index.
/// TopBottom takes the head and tail of one descending order, so the two
/// halves never overlap. Random draws without replacement from `rng`,
/// which is required for that strategy only.
std::vector<std::size_t> select_galleries(std::span<const float> similarity_row, std::size_t k, Selection strategy,
                                          std::mt19937_64* rng = nullptr);

/// Row-wise selection over an m x n matrix; returns m * k indices.
std::vector<std::size_t> select_rows(const diff::Tensor& similarities, std::size_t k, Selection strategy,
                                     std::mt19937_64* rng = nullptr);

/// Softmax over the selected similarities of each row (m x k -> m x k).
diff::Tensor selection_probabilities(const diff::Tensor& selected_similarities);

/// Row entropies -sum p log p with 0 log 0 = 0 (m x k -> m). Values are
/// clipped into [0, log k] to absorb rounding; negative probabilities are an
/// error.
diff::Tensor reid_entropy(const diff::Tensor& probabilities);

struct ObjectiveTerms {
  diff::Tensor loss;       // scalar
  diff::Tensor entropies;  // m
  diff::Tensor similarities;
  std::vector<std::size_t> selected;  // m * k
  double drift_squared = 0.0;
};

/// mean_i H_i + lambda * sum over all tensors of ||theta - theta0||^2.
/// When `selected` is non-empty it is used instead of running selection.
ObjectiveTerms temp_objective(const diff::Tensor& query_features, const GalleryStore& gallery,
                              const model::ParameterSet& params, const TempConfig& config,
                              std::mt19937_64* rng = nullptr, std::span<const std::size_t> selected = {});

/// Gallery ranking per query, descending similarity, ties by lowest index.
struct Prediction {
  std::size_t queries = 0;
  std::size_t galleries = 0;
  std::vector<std::uint32_t> ranking;  // queries x galleries
  std::vector<std::size_t> top1;
  std::vector<int> top1_identity;

  std::span<const std::uint32_t> ranked(std::size_t q) const { return {ranking.data() + q * galleries, galleries}; }
  bool operator==(const Prediction&) const = default;
};

Prediction rank_similarities(std::span<const float> similarities, std::size_t queries, const GalleryStore& gallery);
Prediction predict(const diff::Tensor& query_features, const GalleryStore& gallery);

}  // namespace temp::core
