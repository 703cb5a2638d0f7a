#pragma once

#include <string>
#include <vector>

#include "temp/diff/tensor.hpp"
#include "temp/model/extractor.hpp"

namespace temp::harness {

/// A set of inputs to embed with one role ("query" or "gallery") and phase.
struct FeatureSet {
  diff::Tensor inputs;
  std::vector<int> labels;
  std::string role;
  std::size_t phase = 0;
};

/// CSV with header f0..f{d-1},identity,role,phase and one row per input.
/// Features are extracted with running statistics and written with 9
/// significant digits.
void dump_features(const model::Extractor& extractor, const std::vector<FeatureSet>& sets, const std::string& path);

struct FeatureRow {
  std::vector<float> features;
  int identity = 0;
  std::string role;
  std::size_t phase = 0;
};

std::vector<FeatureRow> read_feature_dump(const std::string& path);

}  // namespace temp::harness
