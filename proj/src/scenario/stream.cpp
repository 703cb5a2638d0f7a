#include "temp/scenario/stream.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace temp::scenario {

std::size_t ScenarioStream::gallery_events() const {
  return static_cast<std::size_t>(
      std::count_if(phases.begin(), phases.end(), [](const Phase& p) { return p.gallery.has_value(); }));
}

std::size_t ScenarioStream::total_batches() const {
  std::size_t n = 0;
  for (const Phase& p : phases) n += p.batches.size();
  return n;
}

std::size_t ScenarioStream::total_queries() const {
  std::size_t n = 0;
  for (const Phase& p : phases)
    for (const QueryBatch& b : p.batches) n += b.labels.size();
  return n;
}

namespace {

std::vector<QueryBatch> shuffled_batches(const model::LabeledSamples& queries, std::size_t batch_size,
                                         std::mt19937_64& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<QueryBatch> out;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    std::span<const std::size_t> idx(order.data() + s, std::min(batch_size, order.size() - s));
    out.push_back({queries.batch(idx), queries.labels_of(idx)});
  }
  return out;
}

std::string strength_label(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", s);
  return buf;
}

}  // namespace

ScenarioStream make_location_change_stream(const SyntheticWorld& world, const std::vector<std::size_t>& domain_order,
                                           std::size_t batch_size, std::uint64_t seed) {
  if (domain_order.empty()) throw std::invalid_argument("domain order is empty");
  std::set<std::size_t> seen;
  for (std::size_t d : domain_order) {
    if (d >= world.num_domains()) throw std::invalid_argument("unknown domain " + std::to_string(d));
    if (!seen.insert(d).second) throw std::invalid_argument("domain " + std::to_string(d) + " repeated");
  }
  std::mt19937_64 rng(seed);
  ScenarioStream stream;
  stream.kind = "location_change";
  for (std::size_t i = 0; i < domain_order.size(); ++i) {
    const DomainData& dom = world.domains[domain_order[i]];
    Phase p;
    p.index = i;
    p.domain = domain_order[i];
    p.name = "domain-" + std::to_string(p.domain);
    p.gallery = dom.gallery;
    p.batches = shuffled_batches(dom.query, batch_size, rng);
    stream.phases.push_back(std::move(p));
  }
  return stream;
}

ScenarioStream make_corruption_stream(const SyntheticWorld& world, std::size_t source_domain,
                                      const CorruptionSpec& spec, std::size_t batch_size, std::uint64_t seed) {
  if (!std::holds_alternative<model::ImageInput>(world.config.input)) {
    throw std::invalid_argument("corruption streams need an image world");
  }
  if (source_domain >= world.num_domains()) throw std::invalid_argument("unknown source domain");
  spec.validate();
  const DomainData& dom = world.domains[source_domain];
  std::mt19937_64 rng(seed);
  ScenarioStream stream;
  stream.kind = "corruption";
  for (std::size_t i = 0; i < spec.schedule.size(); ++i) {
    const double s = spec.schedule[i];
    Phase p;
    p.index = i;
    p.domain = source_domain;
    p.strength = s;
    p.name = to_string(spec.kind) + "@" + strength_label(s);
    if (i == 0) p.gallery = dom.gallery;
    p.batches = shuffled_batches(dom.query, batch_size, rng);
    for (QueryBatch& b : p.batches) b.inputs = corrupt_batch(b.inputs, spec.kind, s);
    stream.phases.push_back(std::move(p));
  }
  return stream;
}

}  // namespace temp::scenario
