#include "temp/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace temp::diff::ops {

using detail::Node;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_string(a.shape()));
  }
}

bool wants_grad(const std::shared_ptr<Node>& n) { return n && n->requires_grad; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self.inputs[k])) continue;
      auto& g = self.inputs[k]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (wants_grad(self.inputs[0])) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self.inputs[1])) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Tensor scale(const Tensor& a, float factor) { return affine(a, factor, 0.0f); }

Tensor affine(const Tensor& a, float factor, float shift) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * a.at(i) + shift;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (float v : a.values()) total += v;
  return Tensor::make_result({1}, {static_cast<float>(total)}, {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (float& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  double total = 0.0;
  for (float v : a.values()) total += v;
  const float inv = 1.0f / static_cast<float>(a.numel());
  return Tensor::make_result({1}, {static_cast<float>(total / static_cast<double>(a.numel()))}, {a},
                             [inv](Node& self) {
                               auto& g = self.inputs[0]->grad_buffer();
                               for (float& v : g) v += self.grad[0] * inv;
                             });
}

Tensor sum_rows(const Tensor& a) {
  require_rank(a, 2, "sum_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<float> out(m);
  auto v = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += v[i * n + j];
    out[i] = static_cast<float>(s);
  }
  return Tensor::make_result({m}, std::move(out), {a}, [m, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul: inner extents differ " + shape_string(a.shape()) + " . " +
                                shape_string(b.shape()));
  }
  std::vector<float> out(m * n, 0.0f);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const float aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& A = *self.inputs[0];
    Node& B = *self.inputs[1];
    const auto& G = self.grad;
    if (A.requires_grad) {
      auto& ga = A.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          float acc = 0.0f;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B.value[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (B.requires_grad) {
      auto& gb = B.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const float aip = A.value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw std::invalid_argument("matmul_nt: inner extents differ " + shape_string(a.shape()) + " . " +
                                shape_string(b.shape()) + "^T");
  }
  std::vector<float> out(m * n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& A = *self.inputs[0];
    Node& B = *self.inputs[1];
    const auto& G = self.grad;
    if (A.requires_grad) {
      auto& ga = A.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const float gij = G[i * n + j];
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * B.value[j * k + p];
        }
    }
    if (B.requires_grad) {
      auto& gb = B.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const float gij = G[i * n + j];
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * A.value[i * k + p];
        }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw std::invalid_argument("linear: input width " + std::to_string(in) + " does not match weight " +
                                shape_string(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_dim}) {
    throw std::invalid_argument("linear: bias shape " + shape_string(bias.shape()));
  }
  std::vector<float> out(n * out_dim);
  auto xv = x.values();
  auto wv = weight.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out_dim; ++o) {
      float acc = bias.defined() ? bias.at(o) : 0.0f;
      for (std::size_t i = 0; i < in; ++i) acc += xv[r * in + i] * wv[o * in + i];
      out[r * out_dim + o] = acc;
    }
  return Tensor::make_result({n, out_dim}, std::move(out), {x, weight, bias}, [n, in, out_dim](Node& self) {
    Node& X = *self.inputs[0];
    Node& W = *self.inputs[1];
    const auto& G = self.grad;
    if (X.requires_grad) {
      auto& gx = X.grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const float g = G[r * out_dim + o];
          for (std::size_t i = 0; i < in; ++i) gx[r * in + i] += g * W.value[o * in + i];
        }
    }
    if (W.requires_grad) {
      auto& gw = W.grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const float g = G[r * out_dim + o];
          for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += g * X.value[r * in + i];
        }
    }
    if (wants_grad(self.inputs[2])) {
      auto& gb = self.inputs[2]->grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) gb[o] += G[r * out_dim + o];
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = weight.dim(0), K = weight.dim(2);
  if (weight.dim(1) != C || weight.dim(3) != K || K % 2 == 0) {
    throw std::invalid_argument("conv2d: weight " + shape_string(weight.shape()) + " incompatible with input " +
                                shape_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{O}) {
    throw std::invalid_argument("conv2d: bias shape " + shape_string(bias.shape()));
  }
  const long pad = static_cast<long>(K / 2);
  const long h = static_cast<long>(H), w = static_cast<long>(W);

  // Valid output range [lo, hi) along one axis for kernel tap t.
  auto range = [pad](long t, long extent) {
    long shift = t - pad;
    long lo = std::max(0L, -shift);
    long hi = std::min(extent, extent - shift);
    return std::pair{lo, hi};
  };

  std::vector<float> out(N * O * H * W);
  auto xv = x.values();
  auto wv = weight.values();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      float* dst = &out[((n * O + o) * H) * W];
      const float b0 = bias.defined() ? bias.at(o) : 0.0f;
      std::fill(dst, dst + H * W, b0);
      for (std::size_t c = 0; c < C; ++c) {
        const float* src = &xv[((n * C + c) * H) * W];
        for (long ky = 0; ky < static_cast<long>(K); ++ky) {
          auto [ylo, yhi] = range(ky, h);
          for (long kx = 0; kx < static_cast<long>(K); ++kx) {
            auto [xlo, xhi] = range(kx, w);
            const float wt = wv[((o * C + c) * K + ky) * K + kx];
            for (long y = ylo; y < yhi; ++y) {
              float* drow = dst + y * w;
              const float* srow = src + (y + ky - pad) * w + (kx - pad);
              for (long xx = xlo; xx < xhi; ++xx) drow[xx] += wt * srow[xx];
            }
          }
        }
      }
    }

  return Tensor::make_result(
      {N, O, H, W}, std::move(out), {x, weight, bias}, [N, C, H, W, O, K, pad, h, w, range](Node& self) {
        Node& X = *self.inputs[0];
        Node& Wt = *self.inputs[1];
        const auto& G = self.grad;
        float* gx = X.requires_grad ? X.grad_buffer().data() : nullptr;
        float* gw = Wt.requires_grad ? Wt.grad_buffer().data() : nullptr;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t o = 0; o < O; ++o) {
            const float* gout = &G[((n * O + o) * H) * W];
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t plane = ((n * C + c) * H) * W;
              for (long ky = 0; ky < static_cast<long>(K); ++ky) {
                auto [ylo, yhi] = range(ky, h);
                for (long kx = 0; kx < static_cast<long>(K); ++kx) {
                  auto [xlo, xhi] = range(kx, w);
                  const std::size_t widx = ((o * C + c) * K + ky) * K + kx;
                  const float wt = Wt.value[widx];
                  float acc = 0.0f;
                  for (long y = ylo; y < yhi; ++y) {
                    const float* grow = gout + y * w;
                    const long off = static_cast<long>(plane) + (y + ky - pad) * w + (kx - pad);
                    if (gx) {
                      float* xrow = gx + off;
                      for (long xx = xlo; xx < xhi; ++xx) xrow[xx] += wt * grow[xx];
                    }
                    if (gw) {
                      const float* srow = X.value.data() + off;
                      for (long xx = xlo; xx < xhi; ++xx) acc += grow[xx] * srow[xx];
                    }
                  }
                  if (gw) gw[widx] += acc;
                }
              }
            }
          }
        if (wants_grad(self.inputs[2])) {
          auto& gb = self.inputs[2]->grad_buffer();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) {
              const float* gout = &G[((n * O + o) * H) * W];
              float acc = 0.0f;
              for (std::size_t i = 0; i < H * W; ++i) acc += gout[i];
              gb[o] += acc;
            }
        }
      });
}

Tensor relu(const Tensor& a) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) > 0.0f ? a.at(i) : 0.0f;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& X = *self.inputs[0];
    auto& g = X.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (X.value[i] > 0.0f) g[i] += self.grad[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<float> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(a.at(i) > 0.0f)) throw std::domain_error("log: non-positive input");
    out[i] = std::log(a.at(i));
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    Node& X = *self.inputs[0];
    auto& g = X.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / X.value[i];
  });
}

Tensor avg_pool2x2(const Tensor& x) {
  require_rank(x, 4, "avg_pool2x2");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = H / 2, Wo = W / 2;
  if (Ho == 0 || Wo == 0) throw std::invalid_argument("avg_pool2x2: input too small " + shape_string(x.shape()));
  std::vector<float> out(N * C * Ho * Wo);
  auto v = x.values();
  for (std::size_t p = 0; p < N * C; ++p)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        const float* base = &v[p * H * W + 2 * y * W + 2 * xx];
        out[(p * Ho + y) * Wo + xx] = 0.25f * (base[0] + base[1] + base[W] + base[W + 1]);
      }
  return Tensor::make_result({N, C, Ho, Wo}, std::move(out), {x}, [N, C, H, W, Ho, Wo](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < N * C; ++p)
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t xx = 0; xx < Wo; ++xx) {
          const float q = 0.25f * self.grad[(p * Ho + y) * Wo + xx];
          float* base = &g[p * H * W + 2 * y * W + 2 * xx];
          base[0] += q;
          base[1] += q;
          base[W] += q;
          base[W + 1] += q;
        }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<float> out(N * C);
  auto v = x.values();
  for (std::size_t p = 0; p < N * C; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i) s += v[p * HW + i];
    out[p] = static_cast<float>(s / static_cast<double>(HW));
  }
  return Tensor::make_result({N, C}, std::move(out), {x}, [N, C, HW](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const float inv = 1.0f / static_cast<float>(HW);
    for (std::size_t p = 0; p < N * C; ++p)
      for (std::size_t i = 0; i < HW; ++i) g[p * HW + i] += self.grad[p] * inv;
  });
}

Tensor l2_normalize_rows(const Tensor& x, float eps) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t m = x.dim(0), d = x.dim(1);
  std::vector<float> out(m * d);
  std::vector<float> norms(m);
  auto v = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(v[i * d + j]) * v[i * d + j];
    norms[i] = std::max(static_cast<float>(std::sqrt(s)), eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v[i * d + j] / norms[i];
  }
  std::vector<float> normalized = out;
  return Tensor::make_result(
      {m, d}, std::move(out), {x}, [m, d, eps, norms = std::move(norms), y = std::move(normalized)](Node& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          const float* gy = &self.grad[i * d];
          if (norms[i] <= eps) {
            // Clamped branch: y = x / eps is linear in x.
            for (std::size_t j = 0; j < d; ++j) g[i * d + j] += gy[j] / eps;
            continue;
          }
          float dot = 0.0f;
          for (std::size_t j = 0; j < d; ++j) dot += gy[j] * y[i * d + j];
          for (std::size_t j = 0; j < d; ++j) g[i * d + j] += (gy[j] - dot * y[i * d + j]) / norms[i];
        }
      });
}

Tensor gather_columns(const Tensor& x, std::span<const std::size_t> indices, std::size_t k) {
  require_rank(x, 2, "gather_columns");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (indices.size() != m * k) throw std::invalid_argument("gather_columns: expected m*k indices");
  std::vector<float> out(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t c = indices[i * k + j];
      if (c >= n) throw std::out_of_range("gather_columns: index out of range");
      out[i * k + j] = x.at(i * n + c);
    }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor::make_result({m, k}, std::move(out), {x}, [m, n, k, idx = std::move(idx)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) g[i * n + idx[i * k + j]] += self.grad[i * k + j];
  });
}

namespace {

// Row-wise log-sum-exp with max subtraction.
std::vector<float> row_logsumexp(std::span<const float> v, std::size_t m, std::size_t n) {
  std::vector<float> lse(m);
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = &v[i * n];
    float mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(static_cast<double>(row[j] - mx));
    lse[i] = mx + static_cast<float>(std::log(s));
  }
  return lse;
}

void require_finite(const Tensor& x, const char* op) {
  for (float v : x.values())
    if (!std::isfinite(v)) throw std::domain_error(std::string(op) + ": non-finite input");
}

}  // namespace

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows");
  require_finite(logits, "softmax_rows");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  auto v = logits.values();
  std::vector<float> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = &v[i * n];
    const float mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / s);
  }
  std::vector<float> probs = out;
  return Tensor::make_result({m, n}, std::move(out), {logits}, [m, n, p = std::move(probs)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      float dot = 0.0f;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * p[i * n + j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += p[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "log_softmax_rows");
  require_finite(logits, "log_softmax_rows");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  auto v = logits.values();
  std::vector<float> lse = row_logsumexp(v, m, n);
  std::vector<float> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v[i * n + j] - lse[i];
  std::vector<float> logp = out;
  return Tensor::make_result({m, n}, std::move(out), {logits}, [m, n, lp = std::move(logp)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      float total = 0.0f;
      for (std::size_t j = 0; j < n; ++j) total += self.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j] - std::exp(lp[i * n + j]) * total;
    }
  });
}

Tensor pairwise_distance(const Tensor& x) {
  require_rank(x, 2, "pairwise_distance");
  const std::size_t m = x.dim(0), d = x.dim(1);
  auto v = x.values();
  std::vector<float> out(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      float s = 0.0f;
      for (std::size_t t = 0; t < d; ++t) {
        const float diff = v[i * d + t] - v[j * d + t];
        s += diff * diff;
      }
      out[i * m + j] = std::sqrt(std::max(s, 1e-12f));
    }
  std::vector<float> dist = out;
  return Tensor::make_result({m, m}, std::move(out), {x}, [m, d, dist = std::move(dist)](Node& self) {
    Node& X = *self.inputs[0];
    auto& g = X.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        const float dij = dist[i * m + j];
        if (dij <= 1e-6f) continue;  // clamped region has zero slope
        const float c = self.grad[i * m + j] / dij;
        for (std::size_t t = 0; t < d; ++t) {
          const float diff = X.value[i * d + t] - X.value[j * d + t];
          g[i * d + t] += c * diff;
          g[j * d + t] -= c * diff;
        }
      }
  });
}

Tensor squared_distance(const Tensor& a, std::span<const float> reference) {
  if (reference.size() != a.numel()) throw std::invalid_argument("squared_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double diff = static_cast<double>(a.at(i)) - reference[i];
    s += diff * diff;
  }
  std::vector<float> ref(reference.begin(), reference.end());
  return Tensor::make_result({1}, {static_cast<float>(s)}, {a}, [ref = std::move(ref)](Node& self) {
    Node& X = *self.inputs[0];
    auto& g = X.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0f * self.grad[0] * (X.value[i] - ref[i]);
  });
}

}  // namespace temp::diff::ops
