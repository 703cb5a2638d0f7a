#include "temp/core/gallery.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "temp/diff/ops.hpp"
#include "temp/model/binary_io.hpp"

namespace temp::core {

namespace {

constexpr char kMagic[8] = {'T', 'E', 'M', 'P', 'G', 'A', 'L', 'L'};
constexpr std::uint32_t kVersion = 1;

// Extraction runs in chunks; RunningStats mode makes this exact.
constexpr std::size_t kChunk = 256;

}  // namespace

GalleryStore::GalleryStore(std::vector<float> features, std::size_t dim, std::vector<int> labels, std::string tag)
    : features_(std::move(features)), dim_(dim), labels_(std::move(labels)), tag_(std::move(tag)) {
  if (labels_.empty()) throw std::invalid_argument("gallery must not be empty");
  if (dim_ == 0 || features_.size() != labels_.size() * dim_) {
    throw std::invalid_argument("gallery features do not match n x d");
  }
  std::vector<float> normalized(features_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const float v = features_[i * dim_ + j];
      if (!std::isfinite(v)) throw std::invalid_argument("gallery row " + std::to_string(i) + " is not finite");
      sq += double(v) * v;
    }
    if (sq == 0.0) throw std::invalid_argument("gallery row " + std::to_string(i) + " has zero norm");
    const double norm = std::max(std::sqrt(sq), 1e-12);
    for (std::size_t j = 0; j < dim_; ++j) {
      normalized[i * dim_ + j] = static_cast<float>(features_[i * dim_ + j] / norm);
    }
  }
  normalized_ = diff::Tensor::from({labels_.size(), dim_}, std::move(normalized));
}

bool GalleryStore::operator==(const GalleryStore& other) const {
  if (dim_ != other.dim_ || labels_ != other.labels_ || tag_ != other.tag_) return false;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(features_[i]) != std::bit_cast<std::uint32_t>(other.features_[i])) return false;
  }
  return true;
}

void GalleryStore::save(const std::string& path) const {
  model::BinaryWriter w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u64(labels_.size());
  w.u64(dim_);
  w.f32s(features_);
  for (int y : labels_) w.i32(y);
  w.str(tag_);
  w.save(path);
}

GalleryStore GalleryStore::load(const std::string& path) {
  model::BinaryReader r = model::BinaryReader::open(path);
  auto magic = r.bytes(8);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw std::runtime_error(path + " is not a gallery file");
  if (r.u32() != kVersion) throw std::runtime_error("unsupported gallery version in " + path);
  const std::uint64_t n = r.u64();
  const std::uint64_t d = r.u64();
  if (n == 0 || d == 0 || n > (1ull << 32) || d > (1ull << 20)) throw std::runtime_error("bad gallery extent");
  std::vector<float> features = r.f32s(n * d);
  std::vector<int> labels(n);
  for (int& y : labels) y = r.i32();
  std::string tag = r.str();
  if (!r.at_end()) throw std::runtime_error("trailing bytes in gallery file");
  return GalleryStore(std::move(features), d, std::move(labels), std::move(tag));
}

std::uint64_t parameter_fingerprint(const model::ParameterSet& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::span<const float> values) {
    for (float v : values) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) mix(params.tensor(i).values());
  for (const auto& bn : params.bn_layers()) {
    mix(bn.running_mean);
    mix(bn.running_var);
  }
  return h;
}

GalleryStore build_gallery(const model::Extractor& extractor, const diff::Tensor& images, std::vector<int> labels,
                           std::string tag) {
  if (images.rank() == 0 || images.dim(0) == 0) throw std::invalid_argument("gallery image set is empty");
  const std::size_t n = images.dim(0);
  if (labels.size() != n) throw std::invalid_argument("gallery labels do not match images");
  const std::size_t per = images.numel() / n;
  const std::size_t d = extractor.config().feature_dim;
  std::vector<float> features;
  features.reserve(n * d);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    diff::Shape shape = images.shape();
    shape[0] = count;
    auto src = images.values().subspan(start * per, count * per);
    diff::Tensor chunk = diff::Tensor::from(shape, std::vector<float>(src.begin(), src.end()));
    diff::Tensor f = model::extract_features(extractor, chunk, diff::BnMode::RunningStats);
    features.insert(features.end(), f.values().begin(), f.values().end());
  }
  if (tag.empty()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "params:%016llx",
                  static_cast<unsigned long long>(parameter_fingerprint(extractor.params())));
    tag = buf;
  }
  return GalleryStore(std::move(features), d, std::move(labels), std::move(tag));
}

}  // namespace temp::core
