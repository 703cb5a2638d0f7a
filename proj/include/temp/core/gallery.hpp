#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "temp/diff/tensor.hpp"
#include "temp/model/extractor.hpp"

namespace temp::core {

/// Pre-extracted gallery features (raw, unnormalized) with identity labels.
/// Immutable once built, so one store can be shared read-only.
class GalleryStore {
 public:
  /// Rejects n == 0, label count mismatch, non-finite entries and zero rows.
  GalleryStore(std::vector<float> features, std::size_t dim, std::vector<int> labels, std::string tag);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const float> features() const { return features_; }
  std::span<const float> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  const std::vector<int>& labels() const { return labels_; }
  const std::string& tag() const { return tag_; }

  /// Rows divided by max(||row||, 1e-12), as a constant n x d tensor.
  const diff::Tensor& normalized() const { return normalized_; }

  bool operator==(const GalleryStore& other) const;

  /// Binary container, layout in docs/FILE_FORMATS.md.
  void save(const std::string& path) const;
  static GalleryStore load(const std::string& path);

 private:
  std::vector<float> features_;
  std::size_t dim_;
  std::vector<int> labels_;
  std::string tag_;
  diff::Tensor normalized_;
};

/// FNV-1a over the bits of every parameter and BN running statistic.
std::uint64_t parameter_fingerprint(const model::ParameterSet& params);

/// Features of `images` under the extractor's current parameters and
/// running statistics. An empty tag is replaced by "params:<fingerprint>".
GalleryStore build_gallery(const model::Extractor& extractor, const diff::Tensor& images, std::vector<int> labels,
                           std::string tag = {});

}  // namespace temp::core
