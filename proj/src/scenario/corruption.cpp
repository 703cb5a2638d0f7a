#include "temp/scenario/corruption.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace temp::scenario {

namespace {

std::size_t mirror(long i, long n) {
  // Reflection without repeating the edge: -1 -> 1, n -> n - 2.
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

void check_image(const ImageView& image) {
  if (image.pixels.size() != image.channels * image.height * image.width || image.pixels.empty()) {
    throw std::invalid_argument("image buffer does not match its extent");
  }
}

}  // namespace

std::vector<float> apply_brightness(const ImageView& image, double s) {
  check_image(image);
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("brightness factor must be positive");
  std::vector<float> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(std::clamp(image.pixels[i] * s, 0.0, 255.0));
  }
  return out;
}

double blur_sigma(int k) { return 0.3 * ((k - 1) / 2.0 - 1.0) + 0.8; }

std::vector<double> gaussian_taps(int k) {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("blur kernel size must be odd and positive");
  const double sigma = blur_sigma(k);
  const int half = k / 2;
  std::vector<double> taps(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    taps[static_cast<std::size_t>(i + half)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += taps[static_cast<std::size_t>(i + half)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

std::vector<float> apply_gaussian_blur(const ImageView& image, int k) {
  check_image(image);
  auto taps = gaussian_taps(k);
  if (static_cast<std::size_t>(k) > std::min(image.height, image.width)) {
    throw std::invalid_argument("blur kernel of size " + std::to_string(k) + " exceeds the image");
  }
  const long H = static_cast<long>(image.height), W = static_cast<long>(image.width);
  const long half = k / 2;
  std::vector<double> rows(image.pixels.size());
  std::vector<float> out(image.pixels.size());
  for (std::size_t c = 0; c < image.channels; ++c) {
    const float* src = image.pixels.data() + c * H * W;
    double* tmp = rows.data() + c * H * W;
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        double acc = 0.0;
        for (long t = -half; t <= half; ++t) acc += taps[t + half] * src[y * W + mirror(x + t, W)];
        tmp[y * W + x] = acc;
      }
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        double acc = 0.0;
        for (long t = -half; t <= half; ++t) acc += taps[t + half] * tmp[mirror(y + t, H) * W + x];
        out[c * H * W + y * W + x] = static_cast<float>(acc);
      }
  }
  return out;
}

std::vector<float> apply_pixelate(const ImageView& image, double s) {
  check_image(image);
  if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("pixelate scale must lie in (0, 1]");
  const std::size_t H = image.height, W = image.width;
  const std::size_t h = static_cast<std::size_t>(std::lround(s * static_cast<double>(H)));
  const std::size_t w = static_cast<std::size_t>(std::lround(s * static_cast<double>(W)));
  if (h == 0 || w == 0) throw std::invalid_argument("pixelate scale leaves an empty image");

  // Cell i covers source rows [ceil(i*H/h), ceil((i+1)*H/h)), which are
  // exactly the rows that nearest-neighbour upsampling maps back to i.
  auto start = [](std::size_t i, std::size_t big, std::size_t small) { return (i * big + small - 1) / small; };
  std::vector<float> out(image.pixels.size());
  std::vector<float> cells(h * w);
  for (std::size_t c = 0; c < image.channels; ++c) {
    const float* src = image.pixels.data() + c * H * W;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t y = start(i, H, h); y < start(i + 1, H, h); ++y)
          for (std::size_t x = start(j, W, w); x < start(j + 1, W, w); ++x) {
            acc += src[y * W + x];
            ++count;
          }
        cells[i * w + j] = static_cast<float>(acc / static_cast<double>(count));
      }
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out[c * H * W + y * W + x] = cells[(y * h / H) * w + (x * w / W)];
  }
  return out;
}

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::Brightness: return "brightness";
    case CorruptionKind::GaussianBlur: return "gaussian_blur";
    case CorruptionKind::Pixelate: return "pixelate";
  }
  return "unknown";
}

CorruptionKind parse_corruption(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c != '-' && c != '_' && c != ' ') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "brightness") return CorruptionKind::Brightness;
  if (s == "gaussianblur" || s == "blur") return CorruptionKind::GaussianBlur;
  if (s == "pixelate") return CorruptionKind::Pixelate;
  throw std::invalid_argument("unknown corruption '" + name + "'");
}

CorruptionSpec CorruptionSpec::brightness() {
  return {CorruptionKind::Brightness, {0.75, 0.5, 0.75, 1.0, 1.25, 1.5, 1.25, 1.0}};
}
CorruptionSpec CorruptionSpec::gaussian_blur() { return {CorruptionKind::GaussianBlur, {3, 5, 7, 9, 11}}; }
CorruptionSpec CorruptionSpec::gaussian_blur_full_size() {
  return {CorruptionKind::GaussianBlur, {7, 15, 29, 35, 43}};
}
CorruptionSpec CorruptionSpec::pixelate() { return {CorruptionKind::Pixelate, {0.6, 0.5, 0.4, 0.3, 0.25}}; }

bool CorruptionSpec::is_identity(double strength) const {
  switch (kind) {
    case CorruptionKind::Brightness: return strength == 1.0;
    case CorruptionKind::GaussianBlur: return strength == 1.0;
    case CorruptionKind::Pixelate: return strength == 1.0;
  }
  return false;
}

void CorruptionSpec::validate() const {
  if (schedule.empty()) throw std::invalid_argument("corruption schedule is empty");
  for (double s : schedule) {
    switch (kind) {
      case CorruptionKind::Brightness:
        if (!(s > 0.0)) throw std::invalid_argument("brightness factors must be positive");
        break;
      case CorruptionKind::GaussianBlur:
        if (s < 1.0 || s != std::floor(s) || static_cast<long>(s) % 2 == 0) {
          throw std::invalid_argument("blur kernel sizes must be odd positive integers");
        }
        break;
      case CorruptionKind::Pixelate:
        if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("pixelate scales must lie in (0, 1]");
        break;
    }
  }
}

diff::Tensor corrupt_batch(const diff::Tensor& batch, CorruptionKind kind, double strength) {
  if (batch.rank() != 4) throw std::invalid_argument("corruptions need an N x C x H x W batch");
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  const std::size_t per = c * h * w;
  std::vector<float> out;
  out.reserve(batch.numel());
  for (std::size_t i = 0; i < n; ++i) {
    ImageView view{batch.values().subspan(i * per, per), c, h, w};
    std::vector<float> img;
    switch (kind) {
      case CorruptionKind::Brightness: img = apply_brightness(view, strength); break;
      case CorruptionKind::GaussianBlur: img = apply_gaussian_blur(view, static_cast<int>(strength)); break;
      case CorruptionKind::Pixelate: img = apply_pixelate(view, strength); break;
    }
    out.insert(out.end(), img.begin(), img.end());
  }
  return diff::Tensor::from(batch.shape(), std::move(out));
}

}  // namespace temp::scenario
