#pragma once

#include <span>
#include <string>
#include <vector>

#include "temp/core/gallery.hpp"
#include "temp/core/temp.hpp"
#include "temp/diff/gradcheck.hpp"
#include "temp/model/extractor.hpp"

// Float64 re-implementations of the differentiable primitives, the extractor
// forward pass and the adaptation objective. They share no code with the
// float32 tape and serve as the evaluation side of gradient checks and as
// value oracles in tests.
namespace temp::reference {

struct Array {
  diff::Shape shape;
  std::vector<double> v;

  std::size_t dim(std::size_t axis) const { return shape.at(axis); }
  std::size_t rank() const { return shape.size(); }
};

Array from_tensor(const diff::Tensor& t);
Array from_floats(diff::Shape shape, std::span<const float> values);

Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array affine(const Array& a, double factor, double shift);
double sum(const Array& a);
double mean(const Array& a);
Array sum_rows(const Array& a);
Array matmul(const Array& a, const Array& b);
Array matmul_nt(const Array& a, const Array& b);
Array linear(const Array& x, const Array& weight, const Array& bias);
Array conv2d(const Array& x, const Array& weight, const Array& bias);
Array relu(const Array& a);
Array log(const Array& a);
Array avg_pool2x2(const Array& x);
Array global_avg_pool(const Array& x);
Array l2_normalize_rows(const Array& x, double eps = 1e-12);
Array gather_columns(const Array& x, std::span<const std::size_t> indices, std::size_t k);
Array softmax_rows(const Array& x);
Array log_softmax_rows(const Array& x);
Array pairwise_distance(const Array& x);
double squared_distance(const Array& a, std::span<const float> reference);
Array batchnorm(const Array& x, const Array& gamma, const Array& beta, std::span<const float> running_mean,
                std::span<const float> running_var, double epsilon, diff::BnMode mode);
/// Row entropies without clipping.
Array reid_entropy(const Array& probabilities);

/// Extractor forward pass in float64, reading the current parameter values.
Array features(const model::Extractor& extractor, const diff::Tensor& batch, diff::BnMode mode);

/// The adaptation loss for a fixed selection, in float64.
double temp_loss(const model::Extractor& extractor, const diff::Tensor& batch, diff::BnMode mode,
                 const core::GalleryStore& gallery, const core::TempConfig& config,
                 std::span<const std::size_t> selected);

struct GradientCase {
  std::string name;
  diff::GradCheckReport report;
};

struct GradientSuiteOptions {
  float eps = 1e-4f;
  std::size_t max_coordinates_per_tensor = 64;
  std::uint64_t seed = 7;
};

struct GradientSuiteResult {
  std::vector<GradientCase> cases;
  double max_rel_error = 0.0;
  double seconds = 0.0;
};

/// Central-difference checks of every primitive and of the full objective
/// through a three-block extractor (8 queries, 20 gallery rows, k = 5).
GradientSuiteResult run_gradient_suite(const GradientSuiteOptions& options = {});

}  // namespace temp::reference
