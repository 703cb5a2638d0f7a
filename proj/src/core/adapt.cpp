#include "temp/core/adapt.hpp"

#include <stdexcept>

#include "temp/diff/ops.hpp"

namespace temp::core {

const GalleryStore& AdaptationMethod::gallery() const {
  if (!gallery_) throw std::logic_error(name() + ": no gallery has been built");
  return *gallery_;
}

double mean_topk_entropy(const diff::Tensor& similarities, std::size_t k) {
  diff::NoGradGuard guard;
  const std::size_t kk = std::min(k, similarities.dim(1));
  auto selected = select_rows(similarities, kk, Selection::TopK);
  diff::Tensor h = reid_entropy(selection_probabilities(diff::ops::gather_columns(similarities, selected, kk)));
  return diff::ops::mean(h).item();
}

AdaptState AdaptState::create(const model::Extractor& source, const TempConfig& config, std::uint64_t seed) {
  config.validate();
  model::Extractor extractor = source.clone();
  extractor.params().mask_bn_affine();
  return AdaptState{std::move(extractor), diff::AdamState::with(config.learning_rate, 0.0f), config, nullptr,
                    std::mt19937_64(seed)};
}

StepResult temp_adapt_step(AdaptState& state, const diff::Tensor& batch) {
  if (!state.gallery) throw std::logic_error("TEMP step without a gallery");
  state.extractor.check_batch(batch);
  model::ParameterSet& params = state.extractor.params();
  params.zero_grad();

  diff::Tensor features = state.extractor.forward(batch, diff::BnMode::RunningStats);
  ObjectiveTerms terms = temp_objective(features, *state.gallery, params, state.config, &state.rng);

  StepResult r;
  r.prediction = rank_similarities(terms.similarities.values(), batch.dim(0), *state.gallery);
  double h = 0.0;
  for (float v : terms.entropies.values()) h += v;
  r.mean_reid_entropy = h / static_cast<double>(terms.entropies.numel());
  r.loss = terms.loss.item();

  terms.loss.backward();
  std::vector<diff::Tensor> tensors = params.tensors();
  diff::adam_step(tensors, params.trainable_mask(), state.adam);
  r.drift_l2 = params.drift_l2();
  return r;
}

StepResult TempMethod::step(const diff::Tensor& batch) {
  state_.gallery = gallery_;
  return temp_adapt_step(state_, batch);
}

}  // namespace temp::core
