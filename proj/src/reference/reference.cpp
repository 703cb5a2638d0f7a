#include "temp/reference/reference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "temp/diff/ops.hpp"

namespace temp::reference {

namespace {

Array zeros(diff::Shape shape) {
  Array a;
  a.v.assign(diff::shape_numel(shape), 0.0);
  a.shape = std::move(shape);
  return a;
}

void require_same(const Array& a, const Array& b, const char* what) {
  if (a.shape != b.shape) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

template <typename F>
Array elementwise(const Array& a, F f) {
  Array out = a;
  for (double& x : out.v) x = f(x);
  return out;
}

template <typename F>
Array binary(const Array& a, const Array& b, const char* what, F f) {
  require_same(a, b, what);
  Array out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = f(a.v[i], b.v[i]);
  return out;
}

// Channel c of an N x C (spatial = 1) or N x C x H x W array.
std::size_t spatial(const Array& x) { return x.rank() == 4 ? x.dim(2) * x.dim(3) : 1; }

}  // namespace

Array from_tensor(const diff::Tensor& t) { return from_floats(t.shape(), t.values()); }

Array from_floats(diff::Shape shape, std::span<const float> values) {
  if (diff::shape_numel(shape) != values.size()) throw std::invalid_argument("from_floats: size mismatch");
  Array a;
  a.shape = std::move(shape);
  a.v.assign(values.begin(), values.end());
  return a;
}

Array add(const Array& a, const Array& b) { return binary(a, b, "add", std::plus<>()); }
Array sub(const Array& a, const Array& b) { return binary(a, b, "sub", std::minus<>()); }
Array mul(const Array& a, const Array& b) { return binary(a, b, "mul", std::multiplies<>()); }

Array affine(const Array& a, double factor, double shift) {
  return elementwise(a, [&](double x) { return factor * x + shift; });
}

double sum(const Array& a) {
  double s = 0.0;
  for (double x : a.v) s += x;
  return s;
}

double mean(const Array& a) {
  if (a.v.empty()) throw std::invalid_argument("mean of an empty array");
  return sum(a) / static_cast<double>(a.v.size());
}

Array sum_rows(const Array& a) {
  const std::size_t m = a.dim(0), n = a.dim(1);
  Array out = zeros({m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.v[i] += a.v[i * n + j];
  return out;
}

Array matmul(const Array& a, const Array& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw std::invalid_argument("matmul: inner dimensions differ");
  Array out = zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t j = 0; j < n; ++j) out.v[i * n + j] += a.v[i * k + t] * b.v[t * n + j];
  return out;
}

Array matmul_nt(const Array& a, const Array& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  Array out = zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a.v[i * k + t] * b.v[j * k + t];
      out.v[i * n + j] = s;
    }
  return out;
}

Array linear(const Array& x, const Array& weight, const Array& bias) {
  Array out = matmul_nt(x, weight);
  const std::size_t n = out.dim(0), o = out.dim(1);
  if (!bias.v.empty())
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < o; ++j) out.v[i * o + j] += bias.v[j];
  return out;
}

Array conv2d(const Array& x, const Array& weight, const Array& bias) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = weight.dim(0), ks = weight.dim(2);
  const long half = static_cast<long>(ks / 2);
  Array out = zeros({n, o, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          double s = bias.v.empty() ? 0.0 : bias.v[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ky = 0; ky < ks; ++ky)
              for (std::size_t kx = 0; kx < ks; ++kx) {
                const long sy = static_cast<long>(y) + static_cast<long>(ky) - half;
                const long sx = static_cast<long>(xx) + static_cast<long>(kx) - half;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                s += weight.v[((oc * c + ic) * ks + ky) * ks + kx] *
                     x.v[((b * c + ic) * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
              }
          out.v[((b * o + oc) * h + y) * w + xx] = s;
        }
  return out;
}

Array relu(const Array& a) {
  return elementwise(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Array log(const Array& a) {
  return elementwise(a, [](double x) { return std::log(x); });
}

Array avg_pool2x2(const Array& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  Array out = zeros({n, c, oh, ow});
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const double* src = &x.v[p * h * w];
        out.v[(p * oh + y) * ow + xx] = 0.25 * (src[2 * y * w + 2 * xx] + src[2 * y * w + 2 * xx + 1] +
                                                src[(2 * y + 1) * w + 2 * xx] + src[(2 * y + 1) * w + 2 * xx + 1]);
      }
  return out;
}

Array global_avg_pool(const Array& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Array out = zeros({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += x.v[p * hw + i];
    out.v[p] = s / static_cast<double>(hw);
  }
  return out;
}

Array l2_normalize_rows(const Array& x, double eps) {
  const std::size_t m = x.dim(0), d = x.dim(1);
  Array out = x;
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < d; ++t) s += x.v[i * d + t] * x.v[i * d + t];
    const double norm = std::max(std::sqrt(s), eps);
    for (std::size_t t = 0; t < d; ++t) out.v[i * d + t] /= norm;
  }
  return out;
}

Array gather_columns(const Array& x, std::span<const std::size_t> indices, std::size_t k) {
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (indices.size() != m * k) throw std::invalid_argument("gather_columns: index count mismatch");
  Array out = zeros({m, k});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (indices[i * k + j] >= n) throw std::out_of_range("gather_columns: index out of range");
      out.v[i * k + j] = x.v[i * n + indices[i * k + j]];
    }
  return out;
}

Array log_softmax_rows(const Array& x) {
  const std::size_t m = x.dim(0), n = x.dim(1);
  Array out = x;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &x.v[i * n];
    const double top = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - top);
    const double lse = top + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out.v[i * n + j] = row[j] - lse;
  }
  return out;
}

Array softmax_rows(const Array& x) {
  return elementwise(log_softmax_rows(x), [](double v) { return std::exp(v); });
}

Array pairwise_distance(const Array& x) {
  const std::size_t m = x.dim(0), d = x.dim(1);
  Array out = zeros({m, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = x.v[i * d + t] - x.v[j * d + t];
        s += diff * diff;
      }
      out.v[i * m + j] = std::sqrt(std::max(s, 1e-12));
    }
  return out;
}

double squared_distance(const Array& a, std::span<const float> reference) {
  if (reference.size() != a.v.size()) throw std::invalid_argument("squared_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double diff = a.v[i] - static_cast<double>(reference[i]);
    s += diff * diff;
  }
  return s;
}

Array batchnorm(const Array& x, const Array& gamma, const Array& beta, std::span<const float> running_mean,
                std::span<const float> running_var, double epsilon, diff::BnMode mode) {
  const std::size_t n = x.dim(0), c = x.dim(1), s = spatial(x);
  std::vector<double> mu(c), var(c);
  if (mode == diff::BnMode::RunningStats) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean[ch];
      var[ch] = running_var[ch];
    }
  } else {
    const double count = static_cast<double>(n * s);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < s; ++i) m += x.v[(b * c + ch) * s + i];
      m /= count;
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < s; ++i) v += (x.v[(b * c + ch) * s + i] - m) * (x.v[(b * c + ch) * s + i] - m);
      mu[ch] = m;
      var[ch] = v / count;
    }
  }
  Array out = x;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(var[ch] + epsilon);
      for (std::size_t i = 0; i < s; ++i) {
        double& y = out.v[(b * c + ch) * s + i];
        y = gamma.v[ch] * (y - mu[ch]) * inv + beta.v[ch];
      }
    }
  return out;
}

Array reid_entropy(const Array& probabilities) {
  const std::size_t m = probabilities.dim(0), k = probabilities.dim(1);
  Array out = zeros({m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double p = probabilities.v[i * k + j];
      if (p > 0.0) out.v[i] -= p * std::log(p);
    }
  return out;
}

Array features(const model::Extractor& extractor, const diff::Tensor& batch, diff::BnMode mode) {
  extractor.check_batch(batch);
  const auto& cfg = extractor.config();
  const auto& params = extractor.params();
  const bool image = model::is_image(cfg.input);
  Array h = from_tensor(batch);
  if (image) h = affine(h, 1.0 / 64.0, -127.5 / 64.0);
  std::size_t p = 0;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    const Array w = from_tensor(params.tensor(p));
    const Array b = from_tensor(params.tensor(p + 1));
    h = image ? conv2d(h, w, b) : linear(h, w, b);
    const auto& bn = params.bn_layers()[i];
    h = batchnorm(h, from_tensor(params.tensor(p + 2)), from_tensor(params.tensor(p + 3)), bn.running_mean,
                  bn.running_var, bn.epsilon, mode);
    p += 4;
    h = relu(h);
    if (image) h = avg_pool2x2(h);
  }
  if (image) h = global_avg_pool(h);
  return linear(h, from_tensor(params.tensor(p)), from_tensor(params.tensor(p + 1)));
}

double temp_loss(const model::Extractor& extractor, const diff::Tensor& batch, diff::BnMode mode,
                 const core::GalleryStore& gallery, const core::TempConfig& config,
                 std::span<const std::size_t> selected) {
  const Array q = l2_normalize_rows(features(extractor, batch, mode));
  const Array g = l2_normalize_rows(from_floats({gallery.size(), gallery.dim()}, gallery.features()));
  const Array probs = softmax_rows(gather_columns(matmul_nt(q, g), selected, config.k));
  Array h = reid_entropy(probs);
  const double cap = std::log(static_cast<double>(config.k));
  for (double& x : h.v) x = std::clamp(x, 0.0, cap);
  double drift = 0.0;
  const auto& params = extractor.params();
  for (std::size_t i = 0; i < params.size(); ++i) drift += squared_distance(from_tensor(params.tensor(i)), params.entry(i).source);
  return mean(h) + static_cast<double>(config.lambda) * drift;
}

// ---------------------------------------------------------------------------
// Gradient suite

namespace {

namespace ops = diff::ops;
using diff::Tensor;

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}

  // Uniform in [lo, hi], optionally kept at least `gap` away from zero.
  Tensor tensor(diff::Shape shape, float lo, float hi, float gap = 0.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    std::vector<float> v(diff::shape_numel(shape));
    for (float& x : v) {
      do x = dist(engine);
      while (std::abs(x) < gap);
    }
    return Tensor::from(std::move(shape), std::move(v), true);
  }
};

using FloatOp = std::function<Tensor(const std::vector<Tensor>&)>;
using DoubleOp = std::function<Array(const std::vector<Array>&)>;

// Checks d/dx sum(w * op(x)) for a fixed random weighting w of the output.
GradientCase check_op(const std::string& name, std::vector<Tensor> inputs, const FloatOp& f, const DoubleOp& g,
                      Rng& rng, const GradientSuiteOptions& options) {
  diff::Shape out_shape;
  {
    diff::NoGradGuard guard;
    out_shape = f(inputs).shape();
  }
  Tensor weights = rng.tensor(out_shape, -1.0f, 1.0f);
  weights.set_requires_grad(false);
  const Array w = from_tensor(weights);

  auto graph = [&] { return ops::sum(ops::mul(f(inputs), weights)); };
  auto evaluate = [&] {
    std::vector<Array> xs;
    for (const Tensor& t : inputs) xs.push_back(from_tensor(t));
    Array out = g(xs);
    // Scalars may be rank 0 on one side and rank 1 on the other.
    if (out.v.size() == w.v.size()) out.shape = w.shape;
    return sum(mul(out, w));
  };
  diff::GradCheckOptions gc;
  gc.eps = options.eps;
  gc.max_coordinates_per_tensor = options.max_coordinates_per_tensor;
  gc.seed = options.seed;
  return {name, diff::finite_difference_check(graph, inputs, gc, evaluate)};
}

Array scalar_array(double v) { return Array{{}, {v}}; }

std::vector<GradientCase> primitive_cases(Rng& rng, const GradientSuiteOptions& opt) {
  std::vector<GradientCase> cases;
  auto mat = [&](std::size_t m, std::size_t n, float gap = 0.0f) { return rng.tensor({m, n}, -1.0f, 1.0f, gap); };

  cases.push_back(check_op(
      "add", {mat(3, 4), mat(3, 4)}, [](auto& x) { return ops::add(x[0], x[1]); },
      [](auto& x) { return add(x[0], x[1]); }, rng, opt));
  cases.push_back(check_op(
      "sub", {mat(3, 4), mat(3, 4)}, [](auto& x) { return ops::sub(x[0], x[1]); },
      [](auto& x) { return sub(x[0], x[1]); }, rng, opt));
  cases.push_back(check_op(
      "mul", {mat(3, 4), mat(3, 4)}, [](auto& x) { return ops::mul(x[0], x[1]); },
      [](auto& x) { return mul(x[0], x[1]); }, rng, opt));
  cases.push_back(check_op(
      "scale", {mat(3, 4)}, [](auto& x) { return ops::scale(x[0], -1.75f); },
      [](auto& x) { return affine(x[0], static_cast<double>(-1.75f), 0.0); }, rng, opt));
  cases.push_back(check_op(
      "affine", {mat(3, 4)}, [](auto& x) { return ops::affine(x[0], 0.5f, 2.0f); },
      [](auto& x) { return affine(x[0], 0.5, 2.0); }, rng, opt));
  cases.push_back(check_op(
      "sum", {mat(3, 4)}, [](auto& x) { return ops::sum(x[0]); }, [](auto& x) { return scalar_array(sum(x[0])); },
      rng, opt));
  cases.push_back(check_op(
      "mean", {mat(3, 4)}, [](auto& x) { return ops::mean(x[0]); },
      [](auto& x) { return scalar_array(mean(x[0])); }, rng, opt));
  cases.push_back(check_op(
      "sum_rows", {mat(3, 4)}, [](auto& x) { return ops::sum_rows(x[0]); },
      [](auto& x) { return sum_rows(x[0]); }, rng, opt));
  cases.push_back(check_op(
      "matmul", {mat(3, 4), mat(4, 5)}, [](auto& x) { return ops::matmul(x[0], x[1]); },
      [](auto& x) { return matmul(x[0], x[1]); }, rng, opt));
  cases.push_back(check_op(
      "matmul_nt", {mat(3, 4), mat(5, 4)}, [](auto& x) { return ops::matmul_nt(x[0], x[1]); },
      [](auto& x) { return matmul_nt(x[0], x[1]); }, rng, opt));
  cases.push_back(check_op(
      "linear", {mat(4, 3), mat(5, 3), rng.tensor({5}, -1.0f, 1.0f)},
      [](auto& x) { return ops::linear(x[0], x[1], x[2]); }, [](auto& x) { return linear(x[0], x[1], x[2]); },
      rng, opt));
  cases.push_back(check_op(
      "conv2d", {rng.tensor({2, 2, 5, 5}, -1.0f, 1.0f), rng.tensor({3, 2, 3, 3}, -1.0f, 1.0f),
                 rng.tensor({3}, -1.0f, 1.0f)},
      [](auto& x) { return ops::conv2d(x[0], x[1], x[2]); }, [](auto& x) { return conv2d(x[0], x[1], x[2]); },
      rng, opt));
  cases.push_back(check_op(
      "relu", {mat(4, 5, 0.05f)}, [](auto& x) { return ops::relu(x[0]); }, [](auto& x) { return relu(x[0]); },
      rng, opt));
  cases.push_back(check_op(
      "log", {rng.tensor({3, 4}, 0.5f, 2.0f)}, [](auto& x) { return ops::log(x[0]); },
      [](auto& x) { return log(x[0]); }, rng, opt));
  cases.push_back(check_op(
      "avg_pool2x2", {rng.tensor({2, 2, 5, 5}, -1.0f, 1.0f)}, [](auto& x) { return ops::avg_pool2x2(x[0]); },
      [](auto& x) { return avg_pool2x2(x[0]); }, rng, opt));
  cases.push_back(check_op(
      "global_avg_pool", {rng.tensor({2, 3, 4, 4}, -1.0f, 1.0f)},
      [](auto& x) { return ops::global_avg_pool(x[0]); }, [](auto& x) { return global_avg_pool(x[0]); }, rng,
      opt));
  cases.push_back(check_op(
      "l2_normalize_rows", {mat(4, 6)}, [](auto& x) { return ops::l2_normalize_rows(x[0]); },
      [](auto& x) { return l2_normalize_rows(x[0]); }, rng, opt));

  const std::vector<std::size_t> idx = {4, 0, 2, 1, 1, 3, 0, 4, 2};
  cases.push_back(check_op(
      "gather_columns", {mat(3, 5)}, [&](auto& x) { return ops::gather_columns(x[0], idx, 3); },
      [&](auto& x) { return gather_columns(x[0], idx, 3); }, rng, opt));
  cases.push_back(check_op(
      "softmax_rows", {rng.tensor({3, 5}, -2.0f, 2.0f)}, [](auto& x) { return ops::softmax_rows(x[0]); },
      [](auto& x) { return softmax_rows(x[0]); }, rng, opt));
  cases.push_back(check_op(
      "log_softmax_rows", {rng.tensor({3, 5}, -2.0f, 2.0f)},
      [](auto& x) { return ops::log_softmax_rows(x[0]); }, [](auto& x) { return log_softmax_rows(x[0]); }, rng,
      opt));
  cases.push_back(check_op(
      "pairwise_distance", {mat(5, 3)}, [](auto& x) { return ops::pairwise_distance(x[0]); },
      [](auto& x) { return pairwise_distance(x[0]); }, rng, opt));

  std::vector<float> reference(12);
  for (float& r : reference) r = std::uniform_real_distribution<float>(-1.0f, 1.0f)(rng.engine);
  cases.push_back(check_op(
      "squared_distance", {mat(3, 4)}, [&](auto& x) { return ops::squared_distance(x[0], reference); },
      [&](auto& x) { return scalar_array(squared_distance(x[0], reference)); }, rng, opt));

  for (auto mode : {diff::BnMode::RunningStats, diff::BnMode::BatchStats}) {
    for (bool image : {false, true}) {
      const std::size_t c = 3;
      diff::BnState bn = diff::BnState::identity(c);
      bn.gamma = rng.tensor({c}, 0.5f, 1.5f);
      bn.beta = rng.tensor({c}, -0.5f, 0.5f);
      for (std::size_t ch = 0; ch < c; ++ch) {
        bn.running_mean[ch] = std::uniform_real_distribution<float>(-0.5f, 0.5f)(rng.engine);
        bn.running_var[ch] = std::uniform_real_distribution<float>(0.5f, 2.0f)(rng.engine);
      }
      Tensor x = image ? rng.tensor({3, c, 2, 2}, -1.0f, 1.0f) : rng.tensor({6, c}, -1.0f, 1.0f);
      const std::string name = std::string("batchnorm/") + (image ? "image/" : "vector/") +
                               (mode == diff::BnMode::RunningStats ? "running" : "batch");
      cases.push_back(check_op(
          name, {x, bn.gamma, bn.beta},
          [bn, mode](auto& in) {
            diff::BnState s = bn;
            s.gamma = in[1];
            s.beta = in[2];
            return diff::batchnorm(in[0], s, mode);
          },
          [bn, mode](auto& in) {
            return batchnorm(in[0], in[1], in[2], bn.running_mean, bn.running_var, bn.epsilon, mode);
          },
          rng, opt));
    }
  }

  cases.push_back(check_op(
      "reid_entropy", {rng.tensor({4, 5}, 0.05f, 0.3f)}, [](auto& x) { return core::reid_entropy(x[0]); },
      [](auto& x) { return reid_entropy(x[0]); }, rng, opt));
  return cases;
}

GradientCase objective_case(diff::BnMode mode, Rng& rng, const GradientSuiteOptions& opt) {
  model::ExtractorConfig cfg = model::ExtractorConfig::for_vectors(6, opt.seed);
  cfg.widths = {10, 10, 10};
  cfg.feature_dim = 6;
  model::Extractor ex = model::Extractor::build(cfg);
  auto& params = ex.params();
  for (auto& bn : params.bn_layers()) {
    for (float& m : bn.running_mean) m = std::uniform_real_distribution<float>(-0.3f, 0.3f)(rng.engine);
    for (float& v : bn.running_var) v = std::uniform_real_distribution<float>(0.5f, 2.0f)(rng.engine);
  }
  // Move theta away from theta0 so the regularizer has a gradient.
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (float& v : params.tensor(i).mutable_values()) v += std::normal_distribution<float>(0.0f, 0.05f)(rng.engine);
  }
  params.set_all_trainable();

  Tensor batch = rng.tensor({8, 6}, -1.5f, 1.5f);
  batch.set_requires_grad(false);
  std::vector<float> gfeat(20 * 6);
  for (float& v : gfeat) v = std::normal_distribution<float>(0.0f, 1.0f)(rng.engine);
  std::vector<int> glabels(20);
  for (std::size_t i = 0; i < glabels.size(); ++i) glabels[i] = static_cast<int>(i / 2);
  const core::GalleryStore gallery(std::move(gfeat), 6, std::move(glabels), "gradient-suite");

  core::TempConfig tc;
  tc.k = 5;
  tc.lambda = 1e-2f;
  std::vector<std::size_t> selected;
  {
    diff::NoGradGuard guard;
    selected = core::select_rows(core::similarity_matrix(ex.forward(batch, mode), gallery), tc.k, tc.selection);
  }

  std::vector<Tensor> tensors = params.tensors();
  auto graph = [&] { return core::temp_objective(ex.forward(batch, mode), gallery, params, tc, nullptr, selected).loss; };
  auto evaluate = [&] { return temp_loss(ex, batch, mode, gallery, tc, selected); };
  diff::GradCheckOptions gc;
  gc.eps = opt.eps;
  gc.max_coordinates_per_tensor = opt.max_coordinates_per_tensor;
  gc.seed = opt.seed;
  const std::string name =
      std::string("objective/") + (mode == diff::BnMode::RunningStats ? "running" : "batch") + "_stats";
  return {name, diff::finite_difference_check(graph, tensors, gc, evaluate)};
}

}  // namespace

GradientSuiteResult run_gradient_suite(const GradientSuiteOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(options.seed);
  GradientSuiteResult result;
  result.cases = primitive_cases(rng, options);
  result.cases.push_back(objective_case(diff::BnMode::RunningStats, rng, options));
  for (const auto& c : result.cases) result.max_rel_error = std::max(result.max_rel_error, c.report.max_rel_error);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace temp::reference
