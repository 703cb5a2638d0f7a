#include "temp/model/extractor.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <stdexcept>

#include "temp/diff/ops.hpp"

namespace temp::model {

namespace ops = diff::ops;

diff::Shape sample_shape(const InputKind& input) {
  if (const auto* v = std::get_if<VectorInput>(&input)) return {v->dim};
  const auto& img = std::get<ImageInput>(input);
  return {img.channels, img.height, img.width};
}

bool is_image(const InputKind& input) { return std::holds_alternative<ImageInput>(input); }

ExtractorConfig ExtractorConfig::for_vectors(std::size_t dim, std::uint64_t seed) {
  ExtractorConfig c;
  c.input = VectorInput{dim};
  c.widths = {64, 64, 64};
  c.feature_dim = 32;
  c.seed = seed;
  return c;
}

ExtractorConfig ExtractorConfig::for_images(std::size_t channels, std::size_t height, std::size_t width,
                                            std::uint64_t seed) {
  ExtractorConfig c;
  c.input = ImageInput{channels, height, width};
  c.widths = {8, 16, 32};
  c.feature_dim = 32;
  c.seed = seed;
  return c;
}

void ExtractorConfig::validate() const {
  if (feature_dim < 2) throw std::invalid_argument("feature_dim must be at least 2");
  if (widths.empty()) throw std::invalid_argument("extractor needs at least one batch-normalized block");
  for (std::size_t w : widths)
    if (w == 0) throw std::invalid_argument("layer widths must be positive");
  if (const auto* v = std::get_if<VectorInput>(&input)) {
    if (v->dim == 0) throw std::invalid_argument("input dimension must be positive");
  } else {
    const auto& img = std::get<ImageInput>(input);
    if (img.channels == 0 || img.height == 0 || img.width == 0)
      throw std::invalid_argument("image extents must be positive");
    std::size_t h = img.height, w = img.width;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      h /= 2;
      w /= 2;
      if (h == 0 || w == 0) throw std::invalid_argument("image too small for the number of pooling blocks");
    }
  }
}

// ---------------------------------------------------------------------------
// ParameterSet

std::size_t ParameterSet::add(std::string name, Tensor value) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name " + name);
  value.set_requires_grad(true);
  Entry e;
  e.name = std::move(name);
  e.source.assign(value.values().begin(), value.values().end());
  e.value = std::move(value);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParameterSet::add_batchnorm(const std::string& prefix, std::size_t channels) {
  BnState bn = BnState::identity(channels);
  const std::size_t g = add(prefix + ".gamma", bn.gamma);
  const std::size_t b = add(prefix + ".beta", bn.beta);
  entries_[g].bn_affine = true;
  entries_[b].bn_affine = true;
  bn_.push_back(std::move(bn));
  bn_param_index_.emplace_back(g, b);
  return bn_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  return std::nullopt;
}

const Tensor& ParameterSet::tensor(const std::string& name) const {
  auto i = find(name);
  if (!i) throw std::out_of_range("no parameter named " + name);
  return entries_[*i].value;
}

void ParameterSet::set_trainable(std::size_t i, bool flag) {
  Entry& e = entries_.at(i);
  e.trainable = flag;
  e.value.set_requires_grad(flag);
}

void ParameterSet::set_all_trainable() {
  for (std::size_t i = 0; i < entries_.size(); ++i) set_trainable(i, true);
}

void ParameterSet::snapshot() {
  for (Entry& e : entries_) e.source.assign(e.value.values().begin(), e.value.values().end());
}

void ParameterSet::mask_bn_affine() {
  for (std::size_t i = 0; i < entries_.size(); ++i) set_trainable(i, entries_[i].bn_affine);
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.trainable ? 1 : 0;
  return n;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const Entry& e : entries_) out.push_back(e.value);
  return out;
}

std::vector<bool> ParameterSet::trainable_mask() const {
  std::vector<bool> mask;
  mask.reserve(entries_.size());
  for (const Entry& e : entries_) mask.push_back(e.trainable);
  return mask;
}

void ParameterSet::zero_grad() {
  for (Entry& e : entries_) e.value.zero_grad();
}

double ParameterSet::drift_l2() const {
  double s = 0.0;
  for (const Entry& e : entries_) {
    auto v = e.value.values();
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double d = static_cast<double>(v[j]) - e.source[j];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

bool ParameterSet::frozen_match_source() const {
  for (const Entry& e : entries_) {
    if (e.trainable) continue;
    auto v = e.value.values();
    for (std::size_t j = 0; j < v.size(); ++j)
      if (std::bit_cast<std::uint32_t>(v[j]) != std::bit_cast<std::uint32_t>(e.source[j])) return false;
  }
  return true;
}

void ParameterSet::overwrite_source(std::size_t i, std::vector<float> source) {
  Entry& e = entries_.at(i);
  if (source.size() != e.value.numel()) throw std::invalid_argument("snapshot size mismatch for " + e.name);
  e.source = std::move(source);
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  out.entries_.reserve(entries_.size());
  for (const Entry& e : entries_) {
    Entry c = e;
    c.value = Tensor::from(e.value.shape(), std::vector<float>(e.value.values().begin(), e.value.values().end()),
                           e.trainable);
    out.entries_.push_back(std::move(c));
  }
  out.bn_param_index_ = bn_param_index_;
  for (std::size_t l = 0; l < bn_.size(); ++l) {
    BnState bn = bn_[l];
    bn.gamma = out.entries_[bn_param_index_[l].first].value;
    bn.beta = out.entries_[bn_param_index_[l].second].value;
    out.bn_.push_back(std::move(bn));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Extractor

namespace {

Tensor kaiming_uniform(diff::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> v(diff::shape_numel(shape));
  for (float& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

std::string block_name(const char* kind, std::size_t i) { return std::string(kind) + std::to_string(i); }

}  // namespace

Extractor Extractor::build(const ExtractorConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  ParameterSet params;
  const bool image = is_image(config.input);
  std::size_t in = image ? std::get<ImageInput>(config.input).channels : std::get<VectorInput>(config.input).dim;
  for (std::size_t i = 0; i < config.widths.size(); ++i) {
    const std::size_t out = config.widths[i];
    if (image) {
      params.add(block_name("conv", i) + ".weight", kaiming_uniform({out, in, 3, 3}, in * 9, rng));
      params.add(block_name("conv", i) + ".bias", Tensor::zeros({out}));
    } else {
      params.add(block_name("fc", i) + ".weight", kaiming_uniform({out, in}, in, rng));
      params.add(block_name("fc", i) + ".bias", Tensor::zeros({out}));
    }
    params.add_batchnorm(block_name("bn", i), out);
    in = out;
  }
  params.add("embed.weight", kaiming_uniform({config.feature_dim, in}, in, rng));
  params.add("embed.bias", Tensor::zeros({config.feature_dim}));
  params.snapshot();
  return Extractor(config, std::move(params));
}

void Extractor::check_batch(const Tensor& batch) const {
  diff::Shape expected = sample_shape(config_.input);
  diff::Shape got(batch.shape().begin() + (batch.rank() > 0 ? 1 : 0), batch.shape().end());
  if (batch.rank() != expected.size() + 1 || got != expected) {
    throw std::invalid_argument("extractor expects batches of " + diff::shape_string(expected) + " samples, got " +
                                diff::shape_string(batch.shape()));
  }
}

Tensor Extractor::forward(const Tensor& batch, BnMode mode, std::vector<diff::BatchMoments>* moments) const {
  check_batch(batch);
  const bool image = is_image(config_.input);
  Tensor h = image ? ops::affine(batch, 1.0f / 64.0f, -127.5f / 64.0f) : batch;
  std::size_t p = 0;
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    const Tensor& w = params_.tensor(p++);
    const Tensor& b = params_.tensor(p++);
    h = image ? ops::conv2d(h, w, b) : ops::linear(h, w, b);
    diff::BatchMoments m;
    h = diff::batchnorm(h, params_.bn_layers()[i], mode, moments ? &m : nullptr);
    if (moments) moments->push_back(std::move(m));
    p += 2;  // gamma, beta
    h = ops::relu(h);
    if (image) h = ops::avg_pool2x2(h);
  }
  if (image) h = ops::global_avg_pool(h);
  return ops::linear(h, params_.tensor(p), params_.tensor(p + 1));
}

Extractor Extractor::clone() const { return Extractor(config_, params_.clone()); }

Tensor extract_features(const Extractor& extractor, const Tensor& batch, BnMode mode) {
  diff::NoGradGuard guard;
  return extractor.forward(batch, mode);
}

// ---------------------------------------------------------------------------
// ClassifierHead

ClassifierHead ClassifierHead::build(std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes == 0) throw std::invalid_argument("classifier needs at least one class");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  ClassifierHead head;
  head.weight = kaiming_uniform({num_classes, feature_dim}, feature_dim, rng);
  head.weight.set_requires_grad(true);
  head.bias = Tensor::zeros({num_classes}, true);
  return head;
}

Tensor ClassifierHead::logits(const Tensor& features) const { return ops::linear(features, weight, bias); }

ClassifierHead ClassifierHead::clone() const { return ClassifierHead{weight.clone(), bias.clone()}; }

}  // namespace temp::model
