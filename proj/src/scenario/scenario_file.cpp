#include "temp/scenario/scenario_file.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>

namespace temp::scenario {

using nlohmann::json;

namespace {

// Shortest decimal that reads back as the same float, so JSON shows 0.15
// rather than 0.15000000596046448.
double decimal(float f) {
  char buf[32];
  for (int digits = 6; digits < 9; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, static_cast<double>(f));
    if (std::strtof(buf, nullptr) == f) return std::strtod(buf, nullptr);
  }
  return f;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ScenarioConfig::validate() const {
  world.validate();
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (kind == ScheduleKind::LocationChange) {
    if (domain_order.empty()) throw std::invalid_argument("domain order is empty");
    for (std::size_t d : domain_order) {
      if (d >= world.num_domains) throw std::invalid_argument("domain order names a missing domain");
    }
  } else {
    if (!std::holds_alternative<model::ImageInput>(world.input)) {
      throw std::invalid_argument("corruption schedules need image input");
    }
    if (source_domain >= world.num_domains) throw std::invalid_argument("source domain out of range");
    corruption.validate();
  }
}

json to_json(const WorldConfig& c) {
  json input;
  if (const auto* v = std::get_if<model::VectorInput>(&c.input)) {
    input = {{"kind", "vector"}, {"dim", v->dim}};
  } else {
    const auto& img = std::get<model::ImageInput>(c.input);
    input = {{"kind", "image"}, {"channels", img.channels}, {"height", img.height}, {"width", img.width}};
  }
  return {{"input", input},
          {"num_identities", c.num_identities},
          {"num_domains", c.num_domains},
          {"samples_per_identity", c.samples_per_identity},
          {"gallery_per_identity", c.gallery_per_identity},
          {"train_identities", c.train_identities},
          {"train_samples_per_identity", c.train_samples_per_identity},
          {"prototype_scale", decimal(c.prototype_scale)},
          {"min_prototype_distance", decimal(c.min_prototype_distance)},
          {"intra_noise", decimal(c.intra_noise)},
          {"domain_shift", decimal(c.domain_shift)},
          {"domain_scale_jitter", decimal(c.domain_scale_jitter)},
          {"domain_contrast", decimal(c.domain_contrast)},
          {"domain_noise", decimal(c.domain_noise)},
          {"camera_shift", decimal(c.camera_shift)},
          {"pixel_noise", decimal(c.pixel_noise)},
          {"seed", c.seed}};
}

WorldConfig world_from_json(const json& j) {
  reject_unknown(j,
                 {"input", "num_identities", "num_domains", "samples_per_identity", "gallery_per_identity",
                  "train_identities", "train_samples_per_identity", "prototype_scale", "min_prototype_distance",
                  "intra_noise", "domain_shift", "domain_scale_jitter", "domain_contrast", "domain_noise", "camera_shift",
                  "pixel_noise", "seed"},
                 "world");
  WorldConfig c;
  if (j.contains("input")) {
    const json& in = j.at("input");
    const std::string kind = in.value("kind", "vector");
    if (kind == "vector") {
      reject_unknown(in, {"kind", "dim"}, "world.input");
      c.input = model::VectorInput{in.value("dim", std::size_t{32})};
    } else if (kind == "image") {
      reject_unknown(in, {"kind", "channels", "height", "width"}, "world.input");
      c.input = model::ImageInput{in.value("channels", std::size_t{3}), in.value("height", std::size_t{32}),
                                  in.value("width", std::size_t{32})};
    } else {
      throw std::invalid_argument("unknown input kind '" + kind + "'");
    }
  }
  read(j, "num_identities", c.num_identities);
  read(j, "num_domains", c.num_domains);
  read(j, "samples_per_identity", c.samples_per_identity);
  read(j, "gallery_per_identity", c.gallery_per_identity);
  read(j, "train_identities", c.train_identities);
  read(j, "train_samples_per_identity", c.train_samples_per_identity);
  read(j, "prototype_scale", c.prototype_scale);
  read(j, "min_prototype_distance", c.min_prototype_distance);
  read(j, "intra_noise", c.intra_noise);
  read(j, "domain_shift", c.domain_shift);
  read(j, "domain_scale_jitter", c.domain_scale_jitter);
  read(j, "domain_contrast", c.domain_contrast);
  read(j, "domain_noise", c.domain_noise);
  read(j, "camera_shift", c.camera_shift);
  read(j, "pixel_noise", c.pixel_noise);
  read(j, "seed", c.seed);
  return c;
}

json to_json(const ScenarioConfig& c) {
  json j = {{"world", to_json(c.world)}, {"batch_size", c.batch_size}, {"stream_seed", c.stream_seed}};
  if (c.kind == ScheduleKind::LocationChange) {
    j["schedule"] = {{"kind", "location_change"}, {"domain_order", c.domain_order}};
  } else {
    j["schedule"] = {{"kind", "corruption"},
                     {"source_domain", c.source_domain},
                     {"corruption", to_string(c.corruption.kind)},
                     {"strengths", c.corruption.schedule}};
  }
  return j;
}

ScenarioConfig scenario_from_json(const json& j) {
  reject_unknown(j, {"world", "schedule", "batch_size", "stream_seed"}, "scenario");
  ScenarioConfig c;
  if (j.contains("world")) c.world = world_from_json(j.at("world"));
  read(j, "batch_size", c.batch_size);
  read(j, "stream_seed", c.stream_seed);
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    const std::string kind = s.value("kind", "location_change");
    if (kind == "location_change") {
      reject_unknown(s, {"kind", "domain_order"}, "schedule");
      c.kind = ScheduleKind::LocationChange;
      read(s, "domain_order", c.domain_order);
    } else if (kind == "corruption") {
      reject_unknown(s, {"kind", "source_domain", "corruption", "strengths"}, "schedule");
      c.kind = ScheduleKind::Corruption;
      read(s, "source_domain", c.source_domain);
      const CorruptionKind ck = parse_corruption(s.value("corruption", "gaussian_blur"));
      switch (ck) {
        case CorruptionKind::Brightness: c.corruption = CorruptionSpec::brightness(); break;
        case CorruptionKind::GaussianBlur: c.corruption = CorruptionSpec::gaussian_blur(); break;
        case CorruptionKind::Pixelate: c.corruption = CorruptionSpec::pixelate(); break;
      }
      read(s, "strengths", c.corruption.schedule);
    } else {
      throw std::invalid_argument("unknown schedule kind '" + kind + "'");
    }
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("cannot parse " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

void save_scenario(const std::string& path, const ScenarioConfig& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario file " + path);
  out << to_json(c).dump(2) << "\n";
}

ScenarioStream make_stream(const ScenarioConfig& config, const SyntheticWorld& world, std::size_t batch_size,
                           std::uint64_t seed) {
  if (config.kind == ScheduleKind::LocationChange) {
    return make_location_change_stream(world, config.domain_order, batch_size, seed);
  }
  return make_corruption_stream(world, config.source_domain, config.corruption, batch_size, seed);
}

}  // namespace temp::scenario
