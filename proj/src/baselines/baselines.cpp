#include "temp/baselines/baselines.hpp"

#include <cstdio>
#include <stdexcept>

#include "temp/diff/ops.hpp"

namespace temp::baselines {

using core::StepResult;
using diff::Tensor;

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::NoAdapt: return "NoAdapt";
    case BaselineKind::BnAdapt: return "BnAdapt";
    case BaselineKind::SourceTent: return "SourceTent";
  }
  return "unknown";
}

namespace {

// Predictions and monitoring entropy from constant features.
StepResult score(const Tensor& features, const core::GalleryStore& gallery, std::size_t monitor_k) {
  diff::NoGradGuard guard;
  Tensor sims = core::similarity_matrix(features.detach(), gallery);
  StepResult r;
  r.prediction = core::rank_similarities(sims.values(), features.dim(0), gallery);
  r.mean_reid_entropy = core::mean_topk_entropy(sims, monitor_k);
  r.loss = r.mean_reid_entropy;
  return r;
}

}  // namespace

NoAdaptMethod::NoAdaptMethod(const model::Extractor& source, std::size_t monitor_k)
    : model_(source.clone()), monitor_k_(monitor_k) {
  model_.params().mask_bn_affine();
}

StepResult NoAdaptMethod::step(const Tensor& batch) {
  Tensor features = model::extract_features(model_, batch, diff::BnMode::RunningStats);
  StepResult r = score(features, gallery(), monitor_k_);
  r.drift_l2 = model_.params().drift_l2();
  return r;
}

BnAdaptMethod::BnAdaptMethod(const model::Extractor& source, BnAdaptOptions options)
    : model_(source.clone()), options_(options) {
  if (!(options_.momentum >= 0.0f && options_.momentum <= 1.0f)) {
    throw std::invalid_argument("BN-adapt momentum must lie in [0, 1]");
  }
  model_.params().mask_bn_affine();
}

StepResult BnAdaptMethod::step(const Tensor& batch) {
  const core::GalleryStore& g = gallery();
  model_.check_batch(batch);
  std::vector<diff::BatchMoments> moments;
  Tensor features;
  {
    diff::NoGradGuard guard;
    features = model_.forward(batch, diff::BnMode::BatchStats, &moments);
  }
  auto& layers = model_.params().bn_layers();
  if (options_.momentum == 0.0f) {
    for (std::size_t l = 0; l < layers.size(); ++l) diff::update_running_stats(layers[l], moments[l], 1.0f);
  } else {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      diff::update_running_stats(layers[l], moments[l], options_.momentum);
    }
    features = model::extract_features(model_, batch, diff::BnMode::RunningStats);
  }
  StepResult r = score(features, g, options_.monitor_k);
  r.drift_l2 = model_.params().drift_l2();
  return r;
}

core::GalleryStore BnAdaptMethod::extract_gallery(const Tensor& images, std::vector<int> labels) const {
  Tensor f = model::extract_features(model_, images, diff::BnMode::BatchStats);
  char tag[48];
  std::snprintf(tag, sizeof tag, "batchstats/params:%016llx",
                static_cast<unsigned long long>(core::parameter_fingerprint(model_.params())));
  return core::GalleryStore(std::vector<float>(f.values().begin(), f.values().end()), f.dim(1), std::move(labels),
                            tag);
}

Tensor classification_entropy(const Tensor& logits) {
  // Same -sum p log p law as the re-id entropy, over C classes.
  return diff::ops::mean(core::reid_entropy(diff::ops::softmax_rows(logits)));
}

SourceTentMethod::SourceTentMethod(const model::Extractor& source, const model::ClassifierHead* head,
                                   SourceTentOptions options)
    : model_(source.clone()), options_(options) {
  if (head == nullptr || !head->weight.defined()) {
    throw std::invalid_argument("SourceTent needs the source classifier head from supervised pretraining");
  }
  head_ = head->clone();
  head_.weight.set_requires_grad(false);
  head_.bias.set_requires_grad(false);
  model_.params().mask_bn_affine();
  adam_ = diff::AdamState::with(options_.learning_rate, 0.0f);
}

StepResult SourceTentMethod::step(const Tensor& batch) {
  const core::GalleryStore& g = gallery();
  model_.check_batch(batch);
  model::ParameterSet& params = model_.params();
  params.zero_grad();
  const diff::BnMode mode = options_.use_running_stats ? diff::BnMode::RunningStats : diff::BnMode::BatchStats;
  Tensor features = model_.forward(batch, mode);
  StepResult r = score(features, g, options_.monitor_k);

  Tensor loss = classification_entropy(head_.logits(features));
  r.loss = loss.item();
  loss.backward();
  std::vector<Tensor> tensors = params.tensors();
  diff::adam_step(tensors, params.trainable_mask(), adam_);
  r.drift_l2 = params.drift_l2();
  return r;
}

}  // namespace temp::baselines
