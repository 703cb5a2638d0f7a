#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "temp/diff/batchnorm.hpp"
#include "temp/diff/tensor.hpp"

namespace temp::model {

using diff::BnMode;
using diff::BnState;
using diff::Tensor;

struct VectorInput {
  std::size_t dim = 32;
  bool operator==(const VectorInput&) const = default;
};

struct ImageInput {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  bool operator==(const ImageInput&) const = default;
};

using InputKind = std::variant<VectorInput, ImageInput>;

/// Shape of one sample (without the batch axis).
diff::Shape sample_shape(const InputKind& input);
bool is_image(const InputKind& input);

struct ExtractorConfig {
  InputKind input = VectorInput{};
  /// Hidden widths (vector input) or conv channels (image input), one
  /// batch-normalized block each.
  std::vector<std::size_t> widths = {64, 64, 64};
  std::size_t feature_dim = 32;
  std::uint64_t seed = 0;

  static ExtractorConfig for_vectors(std::size_t dim, std::uint64_t seed = 0);
  static ExtractorConfig for_images(std::size_t channels, std::size_t height, std::size_t width,
                                    std::uint64_t seed = 0);
  void validate() const;
  bool operator==(const ExtractorConfig&) const = default;
};

/// Named parameters theta, their source snapshot theta0, a per-tensor
/// trainability mask, and the batch-normalization layers that own some of
/// the tensors. Copying is disabled because tensors are shared handles;
/// clone() produces an independent deep copy.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    std::vector<float> source;
    bool trainable = true;
    bool bn_affine = false;
  };

  ParameterSet() = default;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  std::size_t add(std::string name, Tensor value);
  /// Adds "<prefix>.gamma" and "<prefix>.beta" and a BN layer; returns the
  /// layer index.
  std::size_t add_batchnorm(const std::string& prefix, std::size_t channels);

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;
  Tensor& tensor(std::size_t i) { return entries_.at(i).value; }
  const Tensor& tensor(std::size_t i) const { return entries_.at(i).value; }
  const Tensor& tensor(const std::string& name) const;

  std::vector<BnState>& bn_layers() { return bn_; }
  const std::vector<BnState>& bn_layers() const { return bn_; }

  void set_trainable(std::size_t i, bool flag);
  void set_all_trainable();
  /// theta0 := theta for every tensor.
  void snapshot();
  /// Trainable exactly on BN gamma/beta.
  void mask_bn_affine();
  std::size_t trainable_count() const;

  std::vector<Tensor> tensors() const;
  std::vector<bool> trainable_mask() const;
  void zero_grad();

  /// ||theta - theta0||_2 over all tensors.
  double drift_l2() const;
  /// True when every non-trainable tensor equals its snapshot bit for bit.
  bool frozen_match_source() const;

  void overwrite_source(std::size_t i, std::vector<float> source);
  ParameterSet clone() const;

 private:
  std::vector<Entry> entries_;
  std::vector<BnState> bn_;
  std::vector<std::pair<std::size_t, std::size_t>> bn_param_index_;
};

/// Feature extractor f_theta. Vector input: (linear -> BN -> ReLU) per width,
/// then linear to feature_dim. Image input: (3x3 conv -> BN -> ReLU -> 2x2
/// average pool) per channel count, global average pool, linear to
/// feature_dim. Image pixels in [0, 255] are mapped to (p - 127.5) / 64.
class Extractor {
 public:
  static Extractor build(const ExtractorConfig& config);

  Extractor(Extractor&&) = default;
  Extractor& operator=(Extractor&&) = default;

  /// Differentiable forward pass. In BatchStats mode, per-layer batch
  /// moments are appended to *moments when given.
  Tensor forward(const Tensor& batch, BnMode mode, std::vector<diff::BatchMoments>* moments = nullptr) const;

  const ExtractorConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  Extractor clone() const;
  void check_batch(const Tensor& batch) const;

 private:
  Extractor(ExtractorConfig config, ParameterSet params) : config_(std::move(config)), params_(std::move(params)) {}
  ExtractorConfig config_;
  ParameterSet params_;
};

/// N x d features with no tape attached; never mutates parameters or
/// running statistics.
Tensor extract_features(const Extractor& extractor, const Tensor& batch, BnMode mode = BnMode::RunningStats);

/// Source identity classifier used during pretraining: logits = f W^T + b.
struct ClassifierHead {
  Tensor weight;  // C x d
  Tensor bias;    // C

  static ClassifierHead build(std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed);
  std::size_t num_classes() const { return weight.dim(0); }
  Tensor logits(const Tensor& features) const;
  ClassifierHead clone() const;
};

}  // namespace temp::model
