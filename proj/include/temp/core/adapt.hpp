#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>

#include "temp/core/gallery.hpp"
#include "temp/core/temp.hpp"
#include "temp/diff/adam.hpp"
#include "temp/model/extractor.hpp"

namespace temp::core {

/// What one online step reports. Predictions are made before any update.
struct StepResult {
  Prediction prediction;
  double mean_reid_entropy = 0.0;
  double loss = 0.0;
  double drift_l2 = 0.0;
};

/// Common step interface for TEMP and the baselines. A method owns its
/// model state and consumes one query batch per step; the batch is not
/// retained.
class AdaptationMethod {
 public:
  virtual ~AdaptationMethod() = default;

  virtual std::string name() const = 0;
  virtual StepResult step(const diff::Tensor& batch) = 0;
  /// The method's current parameters and statistics.
  virtual const model::Extractor& current_model() const = 0;
  /// Gallery features for a phase switch; by default the current model with
  /// its running statistics.
  virtual GalleryStore extract_gallery(const diff::Tensor& images, std::vector<int> labels) const {
    return build_gallery(current_model(), images, std::move(labels));
  }

  void set_gallery(std::shared_ptr<const GalleryStore> gallery) { gallery_ = std::move(gallery); }
  bool has_gallery() const { return static_cast<bool>(gallery_); }
  const GalleryStore& gallery() const;

 protected:
  std::shared_ptr<const GalleryStore> gallery_;
};

/// Mean top-k re-id entropy of a similarity matrix, for monitoring. k is
/// capped at the gallery size.
double mean_topk_entropy(const diff::Tensor& similarities, std::size_t k);

struct AdaptState {
  model::Extractor extractor;
  diff::AdamState adam;
  TempConfig config;
  std::shared_ptr<const GalleryStore> gallery;
  std::mt19937_64 rng;

  /// Clones `source`, masks it to BN gamma/beta and sets up Adam with zero
  /// weight decay.
  static AdaptState create(const model::Extractor& source, const TempConfig& config, std::uint64_t seed);
};

/// Predict with the current parameters, then one Adam step on the
/// entropy objective. BN layers use their frozen running statistics.
StepResult temp_adapt_step(AdaptState& state, const diff::Tensor& batch);

class TempMethod final : public AdaptationMethod {
 public:
  TempMethod(const model::Extractor& source, const TempConfig& config, std::uint64_t seed)
      : state_(AdaptState::create(source, config, seed)) {}

  std::string name() const override { return "TEMP"; }
  StepResult step(const diff::Tensor& batch) override;
  const model::Extractor& current_model() const override { return state_.extractor; }
  const AdaptState& state() const { return state_; }

 private:
  AdaptState state_;
};

}  // namespace temp::core
