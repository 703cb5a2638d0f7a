#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "temp/diff/adam.hpp"
#include "temp/diff/batchnorm.hpp"
#include "temp/diff/gradcheck.hpp"
#include "temp/diff/ops.hpp"
#include "temp/diff/tensor.hpp"

using namespace temp::diff;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f, bool grad = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Float32 central differences are only good to a few 1e-3 here, so these
// primitive checks use a coarse step and tolerance.
void expect_gradients(const std::function<Tensor()>& f, std::vector<Tensor> params, double tol = 2e-2) {
  GradCheckOptions opt;
  opt.eps = 1e-2f;
  GradCheckReport report = finite_difference_check(f, params, opt);
  EXPECT_GT(report.coordinates, 0u);
  EXPECT_LT(report.max_rel_error, tol) << "tensor " << report.worst_tensor << " index " << report.worst_index
                                       << " analytic " << report.worst_analytic << " numeric "
                                       << report.worst_numeric;
}

}  // namespace

TEST(Tensor, ShapeChecks) {
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), std::invalid_argument);
  Tensor t = Tensor::zeros({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_FALSE(t.requires_grad());
}

TEST(Tensor, BackwardNeedsScalar) {
  Tensor a = random_tensor({2, 2}, 1);
  Tensor b = ops::scale(a, 2.0f);
  EXPECT_THROW(b.backward(), std::logic_error);
}

TEST(Tensor, SecondBackwardOnConsumedGraphThrows) {
  Tensor a = random_tensor({3}, 2);
  Tensor loss = ops::sum(ops::mul(a, a));
  loss.backward();
  a.zero_grad();
  EXPECT_THROW(loss.backward(), std::logic_error);
}

TEST(Tensor, LeafGradAccumulatesUnlessReset) {
  Tensor a = random_tensor({3}, 3);
  ops::sum(a).backward();
  EXPECT_THROW(ops::sum(a).backward(), std::logic_error);
  a.zero_grad();
  ops::sum(a).backward();
  for (float g : a.grad()) EXPECT_FLOAT_EQ(g, 1.0f);
}

TEST(Tensor, NoGradGuardProducesConstants) {
  Tensor a = random_tensor({3}, 4);
  NoGradGuard guard;
  Tensor b = ops::scale(a, 3.0f);
  EXPECT_FALSE(b.requires_grad());
}

TEST(Ops, MatmulValues) {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = ops::matmul(a, b);
  EXPECT_EQ(c.values()[0], 58.0f);
  EXPECT_EQ(c.values()[1], 64.0f);
  EXPECT_EQ(c.values()[2], 139.0f);
  EXPECT_EQ(c.values()[3], 154.0f);
  Tensor bt = Tensor::from({2, 3}, {7, 9, 11, 8, 10, 12});
  Tensor d = ops::matmul_nt(a, bt);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c.values()[i], d.values()[i]);
}

TEST(Ops, LinearGradients) {
  Tensor x = random_tensor({4, 5}, 10);
  Tensor w = random_tensor({3, 5}, 11);
  Tensor b = random_tensor({3}, 12);
  expect_gradients([&] { return ops::sum(ops::mul(ops::linear(x, w, b), ops::linear(x, w, b))); }, {x, w, b});
}

TEST(Ops, LinearWithoutBias) {
  Tensor x = random_tensor({2, 3}, 13);
  Tensor w = random_tensor({4, 3}, 14);
  expect_gradients([&] { return ops::sum(ops::relu(ops::linear(x, w, Tensor()))); }, {x, w});
}

TEST(Ops, Conv2dMatchesDirectSum) {
  Tensor x = random_tensor({1, 2, 4, 4}, 20, -1, 1, false);
  Tensor w = random_tensor({3, 2, 3, 3}, 21, -1, 1, false);
  Tensor b = random_tensor({3}, 22, -1, 1, false);
  Tensor y = ops::conv2d(x, w, b);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 4, 4}));
  for (std::size_t o = 0; o < 3; ++o)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double acc = b.values()[o];
        for (std::size_t c = 0; c < 2; ++c)
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              int ii = i + di, jj = j + dj;
              if (ii < 0 || jj < 0 || ii >= 4 || jj >= 4) continue;
              acc += double(x.values()[(c * 4 + ii) * 4 + jj]) * w.values()[((o * 2 + c) * 3 + di + 1) * 3 + dj + 1];
            }
        EXPECT_NEAR(y.values()[(o * 4 + i) * 4 + j], acc, 1e-5);
      }
}

TEST(Ops, Conv2dGradients) {
  Tensor x = random_tensor({2, 2, 5, 5}, 23);
  Tensor w = random_tensor({2, 2, 3, 3}, 24);
  Tensor b = random_tensor({2}, 25);
  Tensor r = random_tensor({2, 2, 5, 5}, 26, -1, 1, false);
  expect_gradients([&] { return ops::sum(ops::mul(ops::conv2d(x, w, b), r)); }, {x, w, b});
}

TEST(Ops, PoolingGradients) {
  Tensor x = random_tensor({2, 3, 4, 6}, 30);
  Tensor r = random_tensor({2, 3}, 31, -1, 1, false);
  expect_gradients([&] { return ops::sum(ops::mul(ops::global_avg_pool(ops::avg_pool2x2(x)), r)); }, {x});
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Tensor x = Tensor::from({2, 3}, {1000, 1001, 1002, -5, 0, 5});
  Tensor p = ops::softmax_rows(x);
  for (std::size_t i = 0; i < 2; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_TRUE(std::isfinite(p.values()[i * 3 + j]));
      s += p.values()[i * 3 + j];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  Tensor bad = Tensor::from({1, 2}, {std::nanf(""), 1.0f});
  EXPECT_THROW(ops::softmax_rows(bad), std::domain_error);
}

TEST(Ops, SoftmaxAndLogSoftmaxGradients) {
  Tensor x = random_tensor({3, 4}, 40, -2, 2);
  Tensor r = random_tensor({3, 4}, 41, -1, 1, false);
  expect_gradients([&] { return ops::sum(ops::mul(ops::softmax_rows(x), r)); }, {x});
  expect_gradients([&] { return ops::sum(ops::mul(ops::log_softmax_rows(x), r)); }, {x});
}

TEST(Ops, LogRejectsNonPositive) {
  EXPECT_THROW(ops::log(Tensor::from({2}, {1.0f, 0.0f})), std::domain_error);
}

TEST(Ops, NormalizeAndGatherGradients) {
  Tensor x = random_tensor({3, 5}, 50);
  std::vector<std::size_t> idx = {0, 4, 2, 1, 1, 3};
  Tensor r = random_tensor({3, 2}, 51, -1, 1, false);
  expect_gradients([&] { return ops::sum(ops::mul(ops::gather_columns(ops::l2_normalize_rows(x), idx, 2), r)); }, {x});
}

TEST(Ops, NormalizeGuardsZeroRows) {
  Tensor x = Tensor::from({1, 2}, {0.0f, 0.0f});
  Tensor y = ops::l2_normalize_rows(x);
  EXPECT_EQ(y.values()[0], 0.0f);
}

TEST(Ops, PairwiseDistanceGradients) {
  Tensor x = random_tensor({4, 3}, 60);
  expect_gradients([&] { return ops::sum(ops::pairwise_distance(x)); }, {x});
}

TEST(Ops, SquaredDistanceGradients) {
  Tensor a = random_tensor({5}, 70);
  std::vector<float> ref = {0.1f, 0.2f, -0.3f, 0.4f, 0.0f};
  ops::squared_distance(a, ref).backward();
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a.grad()[i], 2.0f * (a.values()[i] - ref[i]), 1e-6);
}

TEST(BatchNorm, BatchStatsNormalize) {
  Tensor x = random_tensor({8, 3}, 80, -3, 5, false);
  BnState bn = BnState::identity(3);
  BatchMoments m;
  Tensor y = batchnorm(x, bn, BnMode::BatchStats, &m);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 8; ++n) {
      s += y.values()[n * 3 + c];
      s2 += double(y.values()[n * 3 + c]) * y.values()[n * 3 + c];
    }
    EXPECT_NEAR(s / 8, 0.0, 1e-5);
    EXPECT_NEAR(s2 / 8, 1.0, 1e-3);
  }
  EXPECT_EQ(m.count, 8u);
  EXPECT_EQ(bn.running_mean, std::vector<float>(3, 0.0f));
}

TEST(BatchNorm, DegenerateBatch) {
  Tensor x = random_tensor({1, 3}, 81, -1, 1, false);
  BnState bn = BnState::identity(3);
  EXPECT_THROW(batchnorm(x, bn, BnMode::BatchStats), DegenerateBatchError);
  EXPECT_NO_THROW(batchnorm(x, bn, BnMode::RunningStats));
  Tensor img = random_tensor({1, 3, 2, 2}, 82, -1, 1, false);
  EXPECT_NO_THROW(batchnorm(img, bn, BnMode::BatchStats));
}

TEST(BatchNorm, Gradients) {
  BnState bn = BnState::identity(3);
  bn.gamma = random_tensor({3}, 90, 0.5f, 1.5f);
  bn.beta = random_tensor({3}, 91);
  bn.running_mean = {0.1f, -0.2f, 0.3f};
  bn.running_var = {1.5f, 0.7f, 2.0f};
  Tensor x = random_tensor({6, 3, 2, 2}, 92);
  Tensor r = random_tensor({6, 3, 2, 2}, 93, -1, 1, false);
  for (BnMode mode : {BnMode::RunningStats, BnMode::BatchStats}) {
    expect_gradients([&] { return ops::sum(ops::mul(batchnorm(x, bn, mode), r)); }, {x, bn.gamma, bn.beta});
  }
}

TEST(BatchNorm, RunningUpdateUsesUnbiasedVariance) {
  BnState bn = BnState::identity(1);
  BatchMoments m{{2.0f}, {3.0f}, 4};
  update_running_stats(bn, m, 1.0f);
  EXPECT_FLOAT_EQ(bn.running_mean[0], 2.0f);
  EXPECT_FLOAT_EQ(bn.running_var[0], 4.0f);
  EXPECT_THROW(update_running_stats(bn, m, 0.0f), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::from({2}, {1.0f, -1.0f}, true);
  Tensor q = Tensor::from({1}, {5.0f}, true);
  ops::add(ops::sum(ops::scale(p, 3.0f)), ops::sum(q)).backward();
  std::vector<Tensor> params = {p, q};
  AdamState st = AdamState::with(0.1f);
  adam_step(params, {true, false}, st);
  EXPECT_NEAR(p.values()[0], 0.9f, 1e-6);
  EXPECT_NEAR(p.values()[1], -1.1f, 1e-6);
  EXPECT_EQ(q.values()[0], 5.0f);
  EXPECT_EQ(st.step_count, 1u);
}

TEST(Adam, MissingGradientIsError) {
  Tensor p = Tensor::from({1}, {1.0f}, true);
  std::vector<Tensor> params = {p};
  AdamState st;
  EXPECT_THROW(adam_step(params, {true}, st), std::logic_error);
}

TEST(Adam, MinimizesQuadratic) {
  Tensor p = Tensor::from({3}, {2.0f, -3.0f, 0.5f}, true);
  std::vector<float> target = {0.0f, 1.0f, -1.0f};
  AdamState st = AdamState::with(0.05f);
  std::vector<Tensor> params = {p};
  for (int i = 0; i < 500; ++i) {
    p.zero_grad();
    ops::squared_distance(p, target).backward();
    adam_step(params, {true}, st);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p.values()[i], target[i], 1e-2);
}

TEST(GradCheck, DetectsWrongGradient) {
  // A deliberately wrong backward rule must be reported.
  Tensor a = random_tensor({4}, 100);
  auto bad = [&] {
    auto v = a.values();
    double s = 0;
    for (float x : v) s += double(x) * x;
    return Tensor::make_result({}, {float(s)}, {a}, [a](detail::Node& self) mutable {
      auto& g = a.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * a.values()[i];  // missing factor 2
    });
  };
  std::vector<Tensor> params = {a};
  GradCheckOptions opt;
  opt.eps = 1e-2f;
  EXPECT_GT(finite_difference_check(bad, params, opt).max_rel_error, 0.3);
}
