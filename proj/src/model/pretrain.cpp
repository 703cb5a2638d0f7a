#include "temp/model/pretrain.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "temp/diff/adam.hpp"
#include "temp/diff/ops.hpp"
#include "temp/model/losses.hpp"

namespace temp::model {

void PretrainConfig::validate() const {
  if (identities_per_batch < 2 || instances_per_identity < 2) {
    throw std::invalid_argument("PK sampling needs P >= 2 and K >= 2");
  }
  if (!(learning_rate > 0.0f)) throw std::invalid_argument("pretraining learning rate must be positive");
  if (epochs == 0) throw std::invalid_argument("pretraining needs at least one epoch");
}

std::vector<std::vector<std::size_t>> pk_epoch(const LabeledSamples& data, std::size_t p, std::size_t k,
                                               std::mt19937_64& rng) {
  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < data.size(); ++i) by_id[data.labels[i]].push_back(i);
  if (by_id.size() < p) throw std::invalid_argument("dataset has fewer identities than P");

  std::vector<std::vector<std::vector<std::size_t>>> chunks;
  for (auto& [id, members] : by_id) {
    std::vector<std::size_t> pool = members;
    if (pool.size() < k) {
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      while (pool.size() < k) pool.push_back(members[pick(rng)]);
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::vector<std::size_t>> id_chunks;
    for (std::size_t s = 0; s + k <= pool.size(); s += k) id_chunks.emplace_back(pool.begin() + s, pool.begin() + s + k);
    chunks.push_back(std::move(id_chunks));
  }

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> available;
  for (std::size_t i = 0; i < chunks.size(); ++i) available.push_back(i);
  while (available.size() >= p) {
    std::shuffle(available.begin(), available.end(), rng);
    std::vector<std::size_t> batch;
    batch.reserve(p * k);
    for (std::size_t j = 0; j < p; ++j) {
      auto& id_chunks = chunks[available[j]];
      batch.insert(batch.end(), id_chunks.back().begin(), id_chunks.back().end());
      id_chunks.pop_back();
    }
    batches.push_back(std::move(batch));
    std::erase_if(available, [&](std::size_t i) { return chunks[i].empty(); });
    std::sort(available.begin(), available.end());
  }
  return batches;
}

PretrainResult pretrain(const LabeledSamples& data, const ExtractorConfig& extractor_config,
                        const PretrainConfig& config) {
  config.validate();
  std::map<int, std::size_t> counts;
  for (int y : data.labels) counts[y] += 1;
  std::size_t eligible = 0;
  for (auto& [id, c] : counts) eligible += c >= config.instances_per_identity ? 1 : 0;
  if (eligible < config.identities_per_batch) {
    throw std::invalid_argument("dataset too small for PK sampling: need " +
                                std::to_string(config.identities_per_batch) + " identities with " +
                                std::to_string(config.instances_per_identity) + " samples");
  }

  std::vector<int> class_labels;
  std::map<int, int> class_of;
  for (auto& [id, c] : counts) {
    class_of[id] = static_cast<int>(class_labels.size());
    class_labels.push_back(id);
  }

  Extractor extractor = Extractor::build(extractor_config);
  extractor.params().set_all_trainable();
  ClassifierHead head = ClassifierHead::build(extractor_config.feature_dim, class_labels.size(), extractor_config.seed);

  std::vector<diff::Tensor> tensors = extractor.params().tensors();
  tensors.push_back(head.weight);
  tensors.push_back(head.bias);
  std::vector<bool> mask(tensors.size(), true);
  diff::AdamState adam = diff::AdamState::with(config.learning_rate, config.weight_decay);

  std::mt19937_64 rng(config.seed);
  std::vector<double> epoch_losses;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    std::size_t steps = 0;
    for (const auto& batch_idx : pk_epoch(data, config.identities_per_batch, config.instances_per_identity, rng)) {
      diff::Tensor batch = data.batch(batch_idx);
      std::vector<int> labels = data.labels_of(batch_idx);
      std::vector<int> classes;
      classes.reserve(labels.size());
      for (int y : labels) classes.push_back(class_of.at(y));

      std::vector<diff::BatchMoments> moments;
      diff::Tensor features = extractor.forward(batch, diff::BnMode::BatchStats, &moments);
      diff::Tensor loss = diff::ops::add(
          diff::ops::scale(cross_entropy_loss(head.logits(features), classes), config.ce_weight),
          diff::ops::scale(softmax_triplet_loss(features, labels), config.triplet_weight));
      for (diff::Tensor& t : tensors) t.zero_grad();
      loss.backward();
      diff::adam_step(tensors, mask, adam);
      for (std::size_t l = 0; l < moments.size(); ++l) {
        diff::update_running_stats(extractor.params().bn_layers()[l], moments[l], config.bn_momentum);
      }
      total += loss.item();
      steps += 1;
    }
    epoch_losses.push_back(steps ? total / static_cast<double>(steps) : 0.0);
  }
  for (diff::Tensor& t : tensors) t.zero_grad();

  extractor.params().snapshot();
  extractor.params().mask_bn_affine();
  head.weight.set_requires_grad(false);
  head.bias.set_requires_grad(false);
  return PretrainResult{std::move(extractor), std::move(head), std::move(class_labels), std::move(epoch_losses)};
}

}  // namespace temp::model
