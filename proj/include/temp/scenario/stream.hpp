#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "temp/model/dataset.hpp"
#include "temp/scenario/corruption.hpp"
#include "temp/scenario/world.hpp"

namespace temp::scenario {

struct QueryBatch {
  diff::Tensor inputs;
  std::vector<int> labels;
};

struct Phase {
  std::size_t index = 0;
  /// "domain-<d>" or "<corruption>@<strength>".
  std::string name;
  std::size_t domain = 0;
  std::optional<double> strength;
  /// When set, the consumer must (re)build its gallery from these samples
  /// before the first batch of the phase.
  std::optional<model::LabeledSamples> gallery;
  std::vector<QueryBatch> batches;
};

/// Fully materialized, ordered test stream.
struct ScenarioStream {
  std::string kind;
  std::vector<Phase> phases;

  std::size_t gallery_events() const;
  std::size_t total_batches() const;
  std::size_t total_queries() const;
};

/// One phase per domain in `domain_order`, each a seeded shuffle of the
/// domain's query split in batches of `batch_size` (the last may be short),
/// with a gallery signal at every phase start.
ScenarioStream make_location_change_stream(const SyntheticWorld& world, const std::vector<std::size_t>& domain_order,
                                           std::size_t batch_size, std::uint64_t seed);

/// Clean gallery of `source_domain` signalled once before phase 0; one phase
/// per schedule entry, each a seeded pass over the corrupted query split.
ScenarioStream make_corruption_stream(const SyntheticWorld& world, std::size_t source_domain,
                                      const CorruptionSpec& spec, std::size_t batch_size, std::uint64_t seed);

}  // namespace temp::scenario
