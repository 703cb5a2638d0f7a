#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "temp/model/dataset.hpp"
#include "temp/model/extractor.hpp"

namespace temp::model {

struct PretrainConfig {
  float learning_rate = 3.5e-4f;
  std::size_t identities_per_batch = 4;    // P
  std::size_t instances_per_identity = 4;  // K
  float weight_decay = 5e-4f;
  std::size_t epochs = 30;
  float ce_weight = 1.0f;
  float triplet_weight = 1.0f;
  float bn_momentum = 0.1f;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One epoch of P x K identity batches. Each identity's samples are
/// shuffled and cut into chunks of K (topped up by resampling when an
/// identity has fewer than K); batches draw P distinct identities with
/// chunks left until fewer than P remain. Returned indices refer to `data`.
std::vector<std::vector<std::size_t>> pk_epoch(const LabeledSamples& data, std::size_t p, std::size_t k,
                                               std::mt19937_64& rng);

struct PretrainResult {
  Extractor extractor;
  ClassifierHead head;
  /// Source label -> classifier row.
  std::vector<int> class_labels;
  std::vector<double> epoch_losses;
};

/// Trains extractor and head with cross-entropy + softmax-triplet using
/// Adam; BN running statistics follow the batch moments with bn_momentum.
/// On return theta0 := theta and only BN gamma/beta are trainable.
PretrainResult pretrain(const LabeledSamples& data, const ExtractorConfig& extractor_config,
                        const PretrainConfig& config);

}  // namespace temp::model
