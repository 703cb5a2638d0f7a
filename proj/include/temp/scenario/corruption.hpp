#pragma once

#include <span>
#include <string>
#include <vector>

#include "temp/diff/tensor.hpp"

namespace temp::scenario {

/// One C x H x W image with pixel values in [0, 255].
struct ImageView {
  std::span<const float> pixels;
  std::size_t channels;
  std::size_t height;
  std::size_t width;
};

/// clip(p * s, 0, 255). s must be positive.
std::vector<float> apply_brightness(const ImageView& image, double s);

/// sigma = 0.3 * ((k - 1) / 2 - 1) + 0.8 for an odd kernel size k.
double blur_sigma(int k);
/// Normalized 1-D Gaussian taps of length k; the 2-D kernel is their outer
/// product.
std::vector<double> gaussian_taps(int k);
/// 2-D Gaussian blur with mirrored borders (the edge pixel is not repeated).
/// k must be odd, positive and no larger than the image.
std::vector<float> apply_gaussian_blur(const ImageView& image, int k);

/// Box-filter down to round(s*H) x round(s*W), then nearest-neighbour back.
/// s must lie in (0, 1].
std::vector<float> apply_pixelate(const ImageView& image, double s);

enum class CorruptionKind { Brightness, GaussianBlur, Pixelate };

std::string to_string(CorruptionKind kind);
CorruptionKind parse_corruption(const std::string& name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianBlur;
  std::vector<double> schedule;

  /// Default schedules. Blur sizes suit 32 x 32 images.
  static CorruptionSpec brightness();
  static CorruptionSpec gaussian_blur();
  /// Kernel sizes meant for person crops of 128 x 256 and larger.
  static CorruptionSpec gaussian_blur_full_size();
  static CorruptionSpec pixelate();

  /// Value at which the corruption leaves an image unchanged, if any.
  bool is_identity(double strength) const;
  void validate() const;
};

/// Applies one corruption at one strength to every image of an
/// N x C x H x W batch.
diff::Tensor corrupt_batch(const diff::Tensor& batch, CorruptionKind kind, double strength);

}  // namespace temp::scenario
