#include "temp/scenario/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace temp::scenario {

namespace {

using model::LabeledSamples;

constexpr std::size_t kMaxPrototypeTries = 10000;

// ---- vector worlds -------------------------------------------------------

struct VectorDomain {
  std::vector<float> scale;
  std::vector<float> offset;
  std::vector<float> camera[2];
  float extra_noise = 0.0f;
};

std::vector<float> gaussian_vector(std::size_t n, float sd, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = sd * g(rng);
  return v;
}

double distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return std::sqrt(s);
}

// `count` prototypes with pairwise distance >= min_distance.
std::vector<std::vector<float>> draw_prototypes(std::size_t count, std::size_t dim, const WorldConfig& c,
                                                std::mt19937_64& rng) {
  std::vector<std::vector<float>> protos;
  std::size_t tries = 0;
  while (protos.size() < count) {
    if (++tries > kMaxPrototypeTries * count) {
      throw std::invalid_argument("cannot place prototypes at the requested minimum distance");
    }
    std::vector<float> p = gaussian_vector(dim, c.prototype_scale, rng);
    bool ok = std::all_of(protos.begin(), protos.end(),
                          [&](const auto& q) { return distance(p, q) >= c.min_prototype_distance; });
    if (ok) protos.push_back(std::move(p));
  }
  return protos;
}

// Translates protos[first, first + count) to zero mean. Distances are kept,
// and each group's sample mean then equals its domain offset exactly.
void center_group(std::vector<std::vector<float>>& protos, std::size_t first, std::size_t count) {
  const std::size_t dim = protos[first].size();
  std::vector<double> mean(dim, 0.0);
  for (std::size_t i = first; i < first + count; ++i)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += protos[i][j];
  for (std::size_t i = first; i < first + count; ++i)
    for (std::size_t j = 0; j < dim; ++j) protos[i][j] -= static_cast<float>(mean[j] / static_cast<double>(count));
}

// Unit vectors, mutually orthogonal (Gram-Schmidt on Gaussian draws).
std::vector<std::vector<float>> orthonormal_directions(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::vector<std::vector<double>> basis;
  std::normal_distribution<double> g(0.0, 1.0);
  while (basis.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) x = g(rng);
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dim; ++j) dot += v[j] * b[j];
      for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * b[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  std::vector<std::vector<float>> out;
  for (const auto& b : basis) out.emplace_back(b.begin(), b.end());
  return out;
}

std::vector<float> random_direction(std::size_t dim, float norm, std::mt19937_64& rng) {
  auto v = orthonormal_directions(1, dim, rng)[0];
  for (float& x : v) x *= norm;
  return v;
}

// Samples of one identity with noise centered across them, so the identity
// mean is exactly the prototype (before the domain transform).
void emit_vector_identity(const std::vector<float>& proto, int label, std::size_t count, const VectorDomain& dom,
                          const WorldConfig& c, std::mt19937_64& rng, const std::vector<int>& cameras,
                          std::vector<LabeledSamples*> sinks) {
  const std::size_t dim = proto.size();
  std::vector<std::vector<float>> noise(count);
  std::vector<double> mean(dim, 0.0);
  for (auto& nz : noise) {
    nz = gaussian_vector(dim, c.intra_noise, rng);
    if (dom.extra_noise > 0.0f) {
      auto extra = gaussian_vector(dim, dom.extra_noise, rng);
      for (std::size_t j = 0; j < dim; ++j) nz[j] += extra[j];
    }
    for (std::size_t j = 0; j < dim; ++j) mean[j] += nz[j];
  }
  for (auto& nz : noise)
    for (std::size_t j = 0; j < dim; ++j) nz[j] -= static_cast<float>(mean[j] / count);

  std::vector<float> x(dim);
  for (std::size_t s = 0; s < count; ++s) {
    const auto& cam = dom.camera[cameras[s]];
    for (std::size_t j = 0; j < dim; ++j) {
      x[j] = dom.scale[j] * (proto[j] + noise[s][j]) + dom.offset[j] + cam[j];
    }
    sinks[s]->append(x, label);
  }
}

SyntheticWorld generate_vector_world(const WorldConfig& c, std::size_t dim) {
  std::mt19937_64 rng(c.seed);
  SyntheticWorld world;
  world.config = c;

  const std::size_t num_domains = c.num_domains;
  auto offsets = orthonormal_directions(num_domains - 1, dim, rng);
  std::vector<VectorDomain> doms(num_domains);
  std::uniform_real_distribution<float> jitter(1.0f - c.domain_scale_jitter, 1.0f + c.domain_scale_jitter);
  for (std::size_t d = 0; d < num_domains; ++d) {
    VectorDomain& dom = doms[d];
    dom.scale.assign(dim, 1.0f);
    dom.offset.assign(dim, 0.0f);
    if (d > 0) {
      for (float& s : dom.scale) s = c.domain_contrast * jitter(rng);
      for (std::size_t j = 0; j < dim; ++j) dom.offset[j] = c.domain_shift * offsets[d - 1][j];
      dom.extra_noise = c.domain_noise;
    }
    for (auto& cam : dom.camera) {
      cam = c.camera_shift > 0.0f ? random_direction(dim, c.camera_shift, rng) : std::vector<float>(dim, 0.0f);
    }
  }

  // Training identities first, then each domain's test identities.
  const std::size_t total = c.train_identities + num_domains * c.num_identities;
  auto protos = draw_prototypes(total, dim, c, rng);
  center_group(protos, 0, c.train_identities);
  for (std::size_t d = 0; d < num_domains; ++d) center_group(protos, c.train_identities + d * c.num_identities, c.num_identities);
  world.train.sample_shape = {dim};
  int next_label = 0;
  {
    std::vector<int> cams(c.train_samples_per_identity);
    for (std::size_t s = 0; s < cams.size(); ++s) cams[s] = static_cast<int>(s % 2);
    std::vector<LabeledSamples*> sinks(c.train_samples_per_identity, &world.train);
    for (std::size_t i = 0; i < c.train_identities; ++i) {
      emit_vector_identity(protos[i], next_label++, c.train_samples_per_identity, doms[0], c, rng, cams, sinks);
    }
  }
  for (std::size_t d = 0; d < num_domains; ++d) {
    DomainData data;
    data.query.sample_shape = {dim};
    data.gallery.sample_shape = {dim};
    data.offset = doms[d].offset;
    std::vector<int> cams(c.samples_per_identity);
    std::vector<LabeledSamples*> sinks(c.samples_per_identity);
    for (std::size_t s = 0; s < c.samples_per_identity; ++s) {
      const bool gallery = s < c.gallery_per_identity;
      cams[s] = gallery ? 1 : 0;
      sinks[s] = gallery ? &data.gallery : &data.query;
    }
    for (std::size_t i = 0; i < c.num_identities; ++i) {
      emit_vector_identity(protos[c.train_identities + d * c.num_identities + i], next_label++,
                           c.samples_per_identity, doms[d], c, rng, cams, sinks);
    }
    world.domains.push_back(std::move(data));
  }
  return world;
}

// ---- image worlds --------------------------------------------------------

struct Blob {
  float cx, cy, radius;
  float color[3];
};

struct ImageIdentity {
  float background[3];
  std::vector<Blob> blobs;
  float stripe_period, stripe_angle;
  float stripe_amplitude[3];
};

struct ImageDomain {
  float gain[3] = {1.0f, 1.0f, 1.0f};
  float bias[3] = {0.0f, 0.0f, 0.0f};
  float extra_noise = 0.0f;
};

constexpr std::size_t kBlobs = 4;

ImageIdentity draw_image_identity(const model::ImageInput& img, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageIdentity id;
  for (float& b : id.background) b = 60.0f + 120.0f * u(rng);
  const float h = static_cast<float>(img.height), w = static_cast<float>(img.width);
  for (std::size_t b = 0; b < kBlobs; ++b) {
    Blob blob;
    blob.cx = w * (0.15f + 0.7f * u(rng));
    blob.cy = h * (0.15f + 0.7f * u(rng));
    blob.radius = std::min(h, w) * (0.08f + 0.12f * u(rng));
    for (float& col : blob.color) col = 255.0f * u(rng);
    id.blobs.push_back(blob);
  }
  id.stripe_period = 4.0f + 3.0f * u(rng);
  id.stripe_angle = std::numbers::pi_v<float> * u(rng);
  for (float& a : id.stripe_amplitude) a = (u(rng) < 0.5f ? -1.0f : 1.0f) * (25.0f + 30.0f * u(rng));
  return id;
}

// Renders one sample. `jitter` moves blobs and the stripe phase.
std::vector<float> render(const ImageIdentity& id, const model::ImageInput& img, const ImageDomain& dom, float dx,
                          float dy, float phase, float noise_sd, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  const std::size_t H = img.height, W = img.width;
  std::vector<float> out(img.channels * H * W);
  const float ca = std::cos(id.stripe_angle), sa = std::sin(id.stripe_angle);
  const float two_pi = 2.0f * std::numbers::pi_v<float>;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      float px[3] = {id.background[0], id.background[1], id.background[2]};
      for (const Blob& b : id.blobs) {
        const float ex = static_cast<float>(x) - (b.cx + dx), ey = static_cast<float>(y) - (b.cy + dy);
        const float wgt = std::exp(-(ex * ex + ey * ey) / (2.0f * b.radius * b.radius));
        for (int ch = 0; ch < 3; ++ch) px[ch] = px[ch] * (1.0f - wgt) + b.color[ch] * wgt;
      }
      const float s = std::sin(two_pi * (static_cast<float>(x) * ca + static_cast<float>(y) * sa) / id.stripe_period +
                               phase);
      for (std::size_t ch = 0; ch < img.channels; ++ch) {
        const std::size_t cc = ch % 3;
        float v = px[cc] + id.stripe_amplitude[cc] * s;
        v = dom.gain[cc] * v + dom.bias[cc] + noise_sd * g(rng);
        out[(ch * H + y) * W + x] = std::clamp(v, 0.0f, 255.0f);
      }
    }
  }
  return out;
}

double rms_difference(std::span<const float> a, std::span<const float> b) {
  return distance(a, b) / std::sqrt(static_cast<double>(a.size()));
}

void emit_image_identity(const ImageIdentity& id, int label, std::size_t count, const model::ImageInput& img,
                         const ImageDomain& dom, const WorldConfig& c, std::mt19937_64& rng,
                         const std::vector<LabeledSamples*>& sinks) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::uniform_real_distribution<float> u(0.0f, 2.0f * std::numbers::pi_v<float>);
  const float shift_sd = 2.0f * c.intra_noise;
  const float noise_sd = c.pixel_noise + dom.extra_noise;
  for (std::size_t s = 0; s < count; ++s) {
    const float dx = shift_sd * g(rng), dy = shift_sd * g(rng), phase = u(rng);
    sinks[s]->append(render(id, img, dom, dx, dy, phase, noise_sd, rng), label);
  }
}

SyntheticWorld generate_image_world(const WorldConfig& c, const model::ImageInput& img) {
  std::mt19937_64 rng(c.seed);
  SyntheticWorld world;
  world.config = c;
  const diff::Shape shape = {img.channels, img.height, img.width};

  std::vector<ImageDomain> doms(c.num_domains);
  std::uniform_real_distribution<float> jitter(1.0f - c.domain_scale_jitter, 1.0f + c.domain_scale_jitter);
  std::uniform_real_distribution<float> sign(-1.0f, 1.0f);
  for (std::size_t d = 1; d < c.num_domains; ++d) {
    for (int ch = 0; ch < 3; ++ch) {
      doms[d].gain[ch] = c.domain_contrast * jitter(rng);
      doms[d].bias[ch] = 16.0f * c.domain_shift * (sign(rng) < 0.0f ? -1.0f : 1.0f);
    }
    doms[d].extra_noise = 40.0f * c.domain_noise;
  }

  // Distinctness is enforced on clean renders: RMS grey-level difference of
  // at least 16 * min_prototype_distance.
  const std::size_t total = c.train_identities + c.num_domains * c.num_identities;
  std::vector<ImageIdentity> ids;
  std::vector<std::vector<float>> clean;
  std::size_t tries = 0;
  const ImageDomain plain;
  std::mt19937_64 render_rng(c.seed ^ 0x9e3779b97f4a7c15ull);
  while (ids.size() < total) {
    if (++tries > kMaxPrototypeTries * total) {
      throw std::invalid_argument("cannot place image identities at the requested minimum distance");
    }
    ImageIdentity id = draw_image_identity(img, rng);
    auto r = render(id, img, plain, 0.0f, 0.0f, 0.0f, 0.0f, render_rng);
    bool ok = std::all_of(clean.begin(), clean.end(),
                          [&](const auto& q) { return rms_difference(r, q) >= 16.0 * c.min_prototype_distance; });
    if (!ok) continue;
    ids.push_back(std::move(id));
    clean.push_back(std::move(r));
  }

  int next_label = 0;
  world.train.sample_shape = shape;
  std::vector<LabeledSamples*> train_sinks(c.train_samples_per_identity, &world.train);
  for (std::size_t i = 0; i < c.train_identities; ++i) {
    emit_image_identity(ids[i], next_label++, c.train_samples_per_identity, img, doms[0], c, rng, train_sinks);
  }
  for (std::size_t d = 0; d < c.num_domains; ++d) {
    DomainData data;
    data.query.sample_shape = shape;
    data.gallery.sample_shape = shape;
    data.offset = {doms[d].bias[0], doms[d].bias[1], doms[d].bias[2]};
    std::vector<LabeledSamples*> sinks(c.samples_per_identity);
    for (std::size_t s = 0; s < c.samples_per_identity; ++s) {
      sinks[s] = s < c.gallery_per_identity ? &data.gallery : &data.query;
    }
    for (std::size_t i = 0; i < c.num_identities; ++i) {
      emit_image_identity(ids[c.train_identities + d * c.num_identities + i], next_label++, c.samples_per_identity,
                          img, doms[d], c, rng, sinks);
    }
    world.domains.push_back(std::move(data));
  }
  return world;
}

}  // namespace

void WorldConfig::validate() const {
  if (num_identities < 2) throw std::invalid_argument("world needs at least 2 identities per domain");
  if (num_domains < 1) throw std::invalid_argument("world needs at least one domain");
  if (gallery_per_identity < 1 || gallery_per_identity >= samples_per_identity) {
    throw std::invalid_argument("each identity needs at least one gallery and one query sample");
  }
  if (train_identities > 0 && train_samples_per_identity < 2) {
    throw std::invalid_argument("training identities need at least 2 samples");
  }
  if (!(prototype_scale > 0.0f) || !(min_prototype_distance >= 0.0f) || !(intra_noise >= 0.0f) ||
      !(domain_shift >= 0.0f) || !(domain_contrast > 0.0f) || !(domain_noise >= 0.0f) || !(camera_shift >= 0.0f) || !(pixel_noise >= 0.0f)) {
    throw std::invalid_argument("world scales must be nonnegative");
  }
  if (!(domain_scale_jitter >= 0.0f && domain_scale_jitter < 1.0f)) {
    throw std::invalid_argument("domain scale jitter must lie in [0, 1)");
  }
  if (const auto* v = std::get_if<model::VectorInput>(&input)) {
    if (v->dim < num_domains) throw std::invalid_argument("vector dimension must be at least the domain count");
  } else {
    const auto& img = std::get<model::ImageInput>(input);
    if (img.channels == 0 || img.height < 4 || img.width < 4) throw std::invalid_argument("image world too small");
  }
}

SyntheticWorld generate_world(const WorldConfig& config) {
  config.validate();
  if (const auto* v = std::get_if<model::VectorInput>(&config.input)) return generate_vector_world(config, v->dim);
  return generate_image_world(config, std::get<model::ImageInput>(config.input));
}

std::vector<float> domain_mean(const SyntheticWorld& world, std::size_t domain) {
  const DomainData& d = world.domains.at(domain);
  const std::size_t dim = d.query.sample_numel();
  std::vector<double> acc(dim, 0.0);
  for (const auto* set : {&d.query, &d.gallery}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      auto s = set->sample(i);
      for (std::size_t j = 0; j < dim; ++j) acc[j] += s[j];
    }
  }
  const double n = static_cast<double>(d.query.size() + d.gallery.size());
  std::vector<float> mean(dim);
  for (std::size_t j = 0; j < dim; ++j) mean[j] = static_cast<float>(acc[j] / n);
  return mean;
}

}  // namespace temp::scenario
