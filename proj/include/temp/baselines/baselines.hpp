#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "temp/core/adapt.hpp"
#include "temp/diff/adam.hpp"
#include "temp/model/extractor.hpp"

namespace temp::baselines {

enum class BaselineKind { NoAdapt, BnAdapt, SourceTent };

std::string to_string(BaselineKind kind);

/// The source model as is. The reported loss is the mean re-id entropy,
/// for monitoring only.
class NoAdaptMethod final : public core::AdaptationMethod {
 public:
  explicit NoAdaptMethod(const model::Extractor& source, std::size_t monitor_k = 50);

  std::string name() const override { return "NoAdapt"; }
  core::StepResult step(const diff::Tensor& batch) override;
  const model::Extractor& current_model() const override { return model_; }

 private:
  model::Extractor model_;
  std::size_t monitor_k_;
};

struct BnAdaptOptions {
  /// 0 replaces the normalization statistics with each batch's moments.
  /// A value in (0, 1] blends them into the running estimate instead.
  float momentum = 0.0f;
  std::size_t monitor_k = 50;
};

/// Normalizes every batch with statistics measured on that batch. Learnable
/// parameters never change. A gallery is normalized with the statistics of
/// the whole gallery set. The most recent batch statistics are kept in the
/// model's running buffers. A single non-spatial sample raises
/// diff::DegenerateBatchError.
class BnAdaptMethod final : public core::AdaptationMethod {
 public:
  BnAdaptMethod(const model::Extractor& source, BnAdaptOptions options = {});

  std::string name() const override { return "BnAdapt"; }
  core::StepResult step(const diff::Tensor& batch) override;
  const model::Extractor& current_model() const override { return model_; }
  core::GalleryStore extract_gallery(const diff::Tensor& images, std::vector<int> labels) const override;

 private:
  model::Extractor model_;
  BnAdaptOptions options_;
};

struct SourceTentOptions {
  float learning_rate = 3.5e-4f;
  /// Tent normalizes with batch statistics; set to use the frozen running
  /// statistics instead.
  bool use_running_stats = false;
  std::size_t monitor_k = 50;
};

/// Minimizes the entropy of the source classifier's softmax by updating BN
/// gamma/beta, one Adam step per batch after predicting.
class SourceTentMethod final : public core::AdaptationMethod {
 public:
  /// Throws std::invalid_argument when no classifier head is given.
  SourceTentMethod(const model::Extractor& source, const model::ClassifierHead* head, SourceTentOptions options = {});

  std::string name() const override { return "SourceTent"; }
  core::StepResult step(const diff::Tensor& batch) override;
  const model::Extractor& current_model() const override { return model_; }

 private:
  model::Extractor model_;
  model::ClassifierHead head_;
  diff::AdamState adam_;
  SourceTentOptions options_;
};

/// Mean Shannon entropy of softmax(logits) over classes.
diff::Tensor classification_entropy(const diff::Tensor& logits);

}  // namespace temp::baselines
