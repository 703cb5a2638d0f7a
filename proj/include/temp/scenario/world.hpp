#pragma once

#include <cstdint>
#include <vector>

#include "temp/model/dataset.hpp"
#include "temp/model/extractor.hpp"

namespace temp::scenario {

/// Knobs of the synthetic re-identification world. Domain 0 is the clean
/// source domain; every other domain applies its own transform.
struct WorldConfig {
  model::InputKind input = model::VectorInput{32};

  /// Test identities per domain; identities of different domains and of
  /// the training split are disjoint.
  std::size_t num_identities = 30;
  std::size_t num_domains = 3;
  std::size_t samples_per_identity = 10;
  /// Leading samples of each identity go to the gallery, the rest are
  /// queries.
  std::size_t gallery_per_identity = 3;

  /// Source-domain training split for pretraining.
  std::size_t train_identities = 60;
  std::size_t train_samples_per_identity = 16;

  // Vector input: x = scale_d * (prototype + noise) + offset_d + camera.
  float prototype_scale = 1.0f;
  float min_prototype_distance = 2.0f;
  float intra_noise = 0.45f;
  /// Norm of each shifted domain's offset; offsets are mutually orthogonal.
  float domain_shift = 2.0f;
  /// Per-dimension scale factors are drawn from [1 - j, 1 + j].
  float domain_scale_jitter = 0.3f;
  /// Global contrast factor of shifted domains, multiplying the scales.
  float domain_contrast = 1.0f;
  /// Extra isotropic noise added in shifted domains.
  float domain_noise = 0.15f;
  /// Norm of a per-domain, per-camera offset. Galleries are taken by
  /// camera 1, queries by camera 0; training mixes both source cameras.
  float camera_shift = 0.0f;

  // Image input: per-channel gain in [1 - j, 1 + j] and bias of magnitude
  // domain_shift * 16 grey levels, plus pixel noise.
  float pixel_noise = 6.0f;

  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const WorldConfig&) const = default;
};

/// One domain's test data.
struct DomainData {
  model::LabeledSamples query;
  model::LabeledSamples gallery;
  /// Input-space offset applied to this domain (vector input).
  std::vector<float> offset;
};

struct SyntheticWorld {
  WorldConfig config;
  model::LabeledSamples train;
  std::vector<DomainData> domains;

  std::size_t num_domains() const { return domains.size(); }
};

/// Deterministic in config (including the seed).
SyntheticWorld generate_world(const WorldConfig& config);

/// Mean sample (query and gallery) of one domain.
std::vector<float> domain_mean(const SyntheticWorld& world, std::size_t domain);

}  // namespace temp::scenario
