#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "temp/scenario/corruption.hpp"
#include "temp/scenario/stream.hpp"
#include "temp/scenario/world.hpp"

namespace temp::scenario {

enum class ScheduleKind { LocationChange, Corruption };

/// Everything needed to rebuild a stream exactly. Stored as JSON next to
/// results; field reference in docs/FILE_FORMATS.md.
struct ScenarioConfig {
  WorldConfig world;
  ScheduleKind kind = ScheduleKind::LocationChange;
  /// Location change: phase order over domains.
  std::vector<std::size_t> domain_order = {1, 2, 0};
  /// Corruption: the clean domain that supplies gallery and queries.
  std::size_t source_domain = 0;
  CorruptionSpec corruption = CorruptionSpec::gaussian_blur();
  std::size_t batch_size = 16;
  std::uint64_t stream_seed = 0;

  void validate() const;
};

nlohmann::json to_json(const WorldConfig& c);
WorldConfig world_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ScenarioConfig scenario_from_json(const nlohmann::json& j);

ScenarioConfig load_scenario(const std::string& path);
void save_scenario(const std::string& path, const ScenarioConfig& c);

/// The stream described by `config` with an explicit batch size and seed.
ScenarioStream make_stream(const ScenarioConfig& config, const SyntheticWorld& world, std::size_t batch_size,
                           std::uint64_t seed);

}  // namespace temp::scenario
