#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "temp/core/adapt.hpp"
#include "temp/core/gallery.hpp"
#include "temp/core/temp.hpp"
#include "temp/diff/ops.hpp"

using namespace temp;
using namespace temp::core;
using diff::Tensor;

namespace {

Tensor random_tensor(diff::Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(diff::shape_numel(shape));
  for (float& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

std::vector<float> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

GalleryStore gallery_of(std::vector<float> rows, std::size_t dim) {
  std::vector<int> labels(rows.size() / dim);
  std::iota(labels.begin(), labels.end(), 0);
  return GalleryStore(std::move(rows), dim, std::move(labels), "test");
}

model::Extractor small_extractor(std::uint64_t seed) {
  model::ExtractorConfig cfg = model::ExtractorConfig::for_vectors(8, seed);
  cfg.widths = {16, 16};
  cfg.feature_dim = 8;
  model::Extractor e = model::Extractor::build(cfg);
  // Non-trivial frozen statistics so RunningStats differs from identity.
  std::mt19937_64 rng(seed + 100);
  for (auto& bn : e.params().bn_layers()) {
    for (float& m : bn.running_mean) m = std::uniform_real_distribution<float>(-0.2f, 0.2f)(rng);
    for (float& v : bn.running_var) v = std::uniform_real_distribution<float>(0.5f, 1.5f)(rng);
  }
  return e;
}

std::vector<int> cyclic_labels(std::size_t n, int ids) {
  std::vector<int> l(n);
  for (std::size_t i = 0; i < n; ++i) l[i] = static_cast<int>(i) % ids;
  return l;
}

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

double dense_entropy(std::span<const double> sims) {
  double z = 0.0;
  for (double s : sims) z += std::exp(s);
  double h = 0.0;
  for (double s : sims) {
    const double p = std::exp(s) / z;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// GalleryStore

TEST(Gallery, ShapeLabelsAndTag) {
  model::Extractor e = small_extractor(1);
  Tensor images = random_tensor({12, 8}, 2);
  GalleryStore g = build_gallery(e, images, cyclic_labels(12, 4));
  EXPECT_EQ(g.size(), 12u);
  EXPECT_EQ(g.dim(), 8u);
  EXPECT_EQ(g.labels(), cyclic_labels(12, 4));
  EXPECT_EQ(g.tag().rfind("params:", 0), 0u);
  EXPECT_EQ(g.normalized().shape(), (diff::Shape{12, 8}));
}

TEST(Gallery, BuildIsDeterministic) {
  model::Extractor e = small_extractor(1);
  Tensor images = random_tensor({9, 8}, 3);
  GalleryStore a = build_gallery(e, images, cyclic_labels(9, 3));
  GalleryStore b = build_gallery(e, images, cyclic_labels(9, 3));
  EXPECT_TRUE(a == b);
}

TEST(Gallery, AdaptedAffineChangesFeatures) {
  model::Extractor source = small_extractor(1);
  model::Extractor adapted = source.clone();
  adapted.params().bn_layers()[0].gamma.mutable_values()[3] += 0.5f;
  Tensor images = random_tensor({10, 8}, 4);
  GalleryStore a = build_gallery(source, images, cyclic_labels(10, 5));
  GalleryStore b = build_gallery(adapted, images, cyclic_labels(10, 5));
  EXPECT_FALSE(a == b);
  EXPECT_NE(a.tag(), b.tag());
}

TEST(Gallery, RejectsInvalidContents) {
  EXPECT_THROW(GalleryStore({}, 2, {}, ""), std::invalid_argument);
  EXPECT_THROW(GalleryStore({1, 0, 0, 0}, 2, {0, 1}, ""), std::invalid_argument);
  EXPECT_THROW(GalleryStore({1, 0, 0, std::numeric_limits<float>::quiet_NaN()}, 2, {0, 1}, ""),
               std::invalid_argument);
  EXPECT_THROW(GalleryStore({1, 0, 0, 1}, 2, {0}, ""), std::invalid_argument);
  EXPECT_THROW(GalleryStore({1, 0, 0}, 2, {0, 1}, ""), std::invalid_argument);
}

TEST(Gallery, SaveLoadRoundTripIsBitExact) {
  model::Extractor e = small_extractor(5);
  GalleryStore g = build_gallery(e, random_tensor({7, 8}, 6), cyclic_labels(7, 3), "custom-tag");
  const std::string path = temp_path("temp_gallery_roundtrip.bin");
  g.save(path);
  GalleryStore back = GalleryStore::load(path);
  EXPECT_TRUE(back == g);
  EXPECT_EQ(back.tag(), "custom-tag");
  std::filesystem::remove(path);
}

TEST(Gallery, LoadRejectsGarbage) {
  const std::string path = temp_path("temp_gallery_garbage.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a gallery";
  }
  EXPECT_THROW(GalleryStore::load(path), std::runtime_error);
  std::filesystem::remove(path);
  EXPECT_THROW(GalleryStore::load(path), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Similarity, selection, probabilities, entropy

TEST(Similarity, AnalyticExamples) {
  GalleryStore g = gallery_of({1, 0, 0, 1, 3, 4}, 2);
  Tensor q = Tensor::from({2, 2}, {1, 0, 1, 1});
  Tensor s = similarity_matrix(q, g);
  ASSERT_EQ(s.shape(), (diff::Shape{2, 3}));
  EXPECT_NEAR(s.at(0), 1.0, 1e-6);
  EXPECT_NEAR(s.at(1), 0.0, 1e-6);
  EXPECT_NEAR(s.at(2), 0.6, 1e-6);
  EXPECT_NEAR(s.at(3), 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(s.at(4), 1.0 / std::sqrt(2.0), 1e-6);
}

TEST(Similarity, RangeAndZeroQueryGuard) {
  GalleryStore g(to_vec(random_tensor({30, 6}, 7)), 6, cyclic_labels(30, 10), "");
  Tensor q = random_tensor({20, 6}, 8, -5, 5);
  const Tensor sims = similarity_matrix(q, g);
  for (float s : sims.values()) {
    EXPECT_GE(s, -1.0f - 1e-6f);
    EXPECT_LE(s, 1.0f + 1e-6f);
  }
  Tensor zero = Tensor::zeros({1, 6});
  const Tensor zero_sims = similarity_matrix(zero, g);
  for (float s : zero_sims.values()) EXPECT_EQ(s, 0.0f);
  EXPECT_THROW(similarity_matrix(Tensor::zeros({1, 5}), g), std::invalid_argument);
}

TEST(Selection, Examples) {
  const std::vector<float> row = {0.9f, 0.1f, 0.5f};
  EXPECT_EQ(select_galleries(row, 2, Selection::TopK), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(select_galleries(row, 3, Selection::TopK), (std::vector<std::size_t>{0, 2, 1}));
  const std::vector<float> tied = {0.5f, 0.5f, 0.1f};
  EXPECT_EQ(select_galleries(tied, 1, Selection::TopK), (std::vector<std::size_t>{0}));
  EXPECT_EQ(select_galleries(row, 1, Selection::BottomK), (std::vector<std::size_t>{1}));
  const std::vector<float> flat = {0.2f, 0.2f, 0.2f};
  EXPECT_EQ(select_galleries(flat, 2, Selection::BottomK), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(select_galleries(row, 4, Selection::TopK), std::invalid_argument);
}

TEST(Selection, TopBottomHalvesAreDisjoint) {
  const std::vector<float> row = {0.3f, 0.9f, 0.1f, 0.5f, 0.7f, 0.2f};
  auto idx = select_galleries(row, 4, Selection::TopBottom);
  ASSERT_EQ(idx.size(), 4u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.begin() + 2), (std::set<std::size_t>{1, 4}));
  EXPECT_EQ(std::set<std::size_t>(idx.begin() + 2, idx.end()), (std::set<std::size_t>{2, 5}));
  // k = n still never repeats an index.
  auto all = select_galleries(row, 6, Selection::TopBottom);
  EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), 6u);
  TempConfig odd;
  odd.selection = Selection::TopBottom;
  odd.k = 5;
  EXPECT_THROW(odd.validate(), std::invalid_argument);
}

TEST(Selection, RandomIsSeededAndWithoutReplacement) {
  std::vector<float> row(40);
  std::iota(row.begin(), row.end(), 0.0f);
  std::mt19937_64 a(3), b(3), c(4);
  auto x = select_galleries(row, 10, Selection::Random, &a);
  auto y = select_galleries(row, 10, Selection::Random, &b);
  auto z = select_galleries(row, 10, Selection::Random, &c);
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
  EXPECT_EQ(std::set<std::size_t>(x.begin(), x.end()).size(), 10u);
  EXPECT_THROW(select_galleries(row, 10, Selection::Random, nullptr), std::invalid_argument);
}

TEST(Selection, NamesRoundTrip) {
  for (Selection s : {Selection::TopK, Selection::BottomK, Selection::TopBottom, Selection::Random}) {
    EXPECT_EQ(parse_selection(to_string(s)), s);
  }
  EXPECT_EQ(parse_selection("TOPK"), Selection::TopK);
  EXPECT_THROW(parse_selection("best"), std::invalid_argument);
}

TEST(Probabilities, Examples) {
  Tensor eq = selection_probabilities(Tensor::full({1, 5}, 0.3f));
  for (float p : eq.values()) EXPECT_NEAR(p, 0.2, 1e-6);
  Tensor two = selection_probabilities(Tensor::from({1, 2}, {1, 0}));
  EXPECT_NEAR(two.at(0), std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-6);
  EXPECT_NEAR(two.at(1), 1.0 / (std::exp(1.0) + 1.0), 1e-6);
}

TEST(Probabilities, ShiftInvariantAndNormalized) {
  Tensor s = random_tensor({6, 9}, 11);
  Tensor shifted = diff::ops::affine(s, 1.0f, 10.0f);
  Tensor p = selection_probabilities(s);
  Tensor ps = selection_probabilities(shifted);
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.at(i), ps.at(i), 1e-6);
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < 9; ++j) total += p.at(r * 9 + j);
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Entropy, Examples) {
  EXPECT_NEAR(reid_entropy(Tensor::full({1, 50}, 1.0f / 50.0f)).item(), std::log(50.0), 1e-5);
  Tensor onehot = Tensor::from({1, 4}, {0, 1, 0, 0});
  EXPECT_EQ(reid_entropy(onehot).item(), 0.0f);
  // Softmax of (1, 0): H = ln(1 + e) - e / (1 + e) = 0.58220.
  const double closed_form = std::log1p(std::exp(1.0)) - std::exp(1.0) / (1.0 + std::exp(1.0));
  EXPECT_NEAR(reid_entropy(selection_probabilities(Tensor::from({1, 2}, {1, 0}))).item(), closed_form, 1e-6);
  EXPECT_NEAR(reid_entropy(Tensor::from({1, 2}, {0.7311f, 0.2689f})).item(), closed_form, 1e-4);
  EXPECT_THROW(reid_entropy(Tensor::from({1, 2}, {1.1f, -0.1f})), std::domain_error);
}

TEST(Entropy, BoundsHoldOnRandomDistributions) {
  std::mt19937_64 rng(12);
  for (std::size_t k : {2u, 5u, 50u}) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<float> v(k);
      std::exponential_distribution<float> e(1.0f);
      float total = 0.0f;
      for (float& x : v) total += (x = std::pow(e(rng), 3.0f));
      for (float& x : v) x /= total;
      const float h = reid_entropy(Tensor::from({1, k}, v)).item();
      EXPECT_GE(h, 0.0f);
      EXPECT_LE(h, static_cast<float>(std::log(static_cast<double>(k))));
    }
  }
}

TEST(Entropy, MeanTopkCapsKAtGallerySize) {
  Tensor sims = Tensor::full({3, 4}, 0.5f);
  EXPECT_NEAR(mean_topk_entropy(sims, 50), std::log(4.0), 1e-6);
  EXPECT_NEAR(mean_topk_entropy(sims, 2), std::log(2.0), 1e-6);
}

// ---------------------------------------------------------------------------
// Properties of the composed pipeline

TEST(Properties, QueryScaleInvariance) {
  GalleryStore g(to_vec(random_tensor({20, 6}, 13)), 6, cyclic_labels(20, 5), "");
  Tensor q = random_tensor({4, 6}, 14);
  std::vector<float> scaled(q.values().begin(), q.values().end());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= (i / 6 == 2) ? 37.5f : 0.01f;
  Tensor qs = Tensor::from({4, 6}, scaled);

  Tensor s1 = similarity_matrix(q, g), s2 = similarity_matrix(qs, g);
  for (std::size_t i = 0; i < s1.numel(); ++i) EXPECT_NEAR(s1.at(i), s2.at(i), 1e-6);
  auto sel1 = select_rows(s1, 5, Selection::TopK), sel2 = select_rows(s2, 5, Selection::TopK);
  EXPECT_EQ(sel1, sel2);
  Tensor p1 = selection_probabilities(diff::ops::gather_columns(s1, sel1, 5));
  Tensor p2 = selection_probabilities(diff::ops::gather_columns(s2, sel2, 5));
  for (std::size_t i = 0; i < p1.numel(); ++i) EXPECT_NEAR(p1.at(i), p2.at(i), 1e-6);
  Tensor h1 = reid_entropy(p1), h2 = reid_entropy(p2);
  for (std::size_t i = 0; i < h1.numel(); ++i) EXPECT_NEAR(h1.at(i), h2.at(i), 1e-6);
  EXPECT_EQ(predict(q, g).ranking, predict(qs, g).ranking);
}

TEST(Properties, BruteForceEquivalence) {
  std::mt19937_64 rng(15);
  for (std::size_t n : {1u, 3u, 11u, 20u}) {
    Tensor gf = random_tensor({n, 5}, 100 + n);
    GalleryStore g(std::vector<float>(gf.values().begin(), gf.values().end()), 5, cyclic_labels(n, 3), "");
    Tensor q = random_tensor({3, 5}, 200 + n);
    Tensor sims = similarity_matrix(q, g);
    auto sel = select_rows(sims, n, Selection::TopK);
    Tensor h = reid_entropy(selection_probabilities(diff::ops::gather_columns(sims, sel, n)));
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> dense(n);
      double qn = 0.0;
      for (std::size_t t = 0; t < 5; ++t) qn += double(q.at(i * 5 + t)) * q.at(i * 5 + t);
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0, gn = 0.0;
        for (std::size_t t = 0; t < 5; ++t) {
          dot += double(q.at(i * 5 + t)) * gf.at(j * 5 + t);
          gn += double(gf.at(j * 5 + t)) * gf.at(j * 5 + t);
        }
        dense[j] = dot / std::sqrt(qn * gn);
        EXPECT_NEAR(sims.at(i * n + j), dense[j], 1e-6);
      }
      EXPECT_NEAR(h.at(i), dense_entropy(dense), 1e-6);
    }
  }
}

// ---------------------------------------------------------------------------
// Objective

class ObjectiveTest : public ::testing::Test {
 protected:
  model::Extractor extractor = small_extractor(21);
  GalleryStore gallery = build_gallery(extractor, random_tensor({30, 8}, 22), cyclic_labels(30, 10));
  Tensor batch = random_tensor({6, 8}, 23);
  TempConfig config = [] {
    TempConfig c;
    c.k = 10;
    return c;
  }();
};

TEST_F(ObjectiveTest, EqualsMeanEntropyAtSourceParameters) {
  config.lambda = 123.0f;
  ObjectiveTerms t = temp_objective(extractor.forward(batch, diff::BnMode::RunningStats), gallery, extractor.params(),
                                    config);
  EXPECT_EQ(t.drift_squared, 0.0);
  EXPECT_EQ(t.loss.item(), diff::ops::mean(t.entropies).item());
}

TEST_F(ObjectiveTest, LambdaZeroIgnoresDrift) {
  extractor.params().bn_layers()[1].beta.mutable_values()[0] += 2.0f;
  config.lambda = 0.0f;
  ObjectiveTerms t = temp_objective(extractor.forward(batch, diff::BnMode::RunningStats), gallery, extractor.params(),
                                    config);
  EXPECT_GT(t.drift_squared, 0.0);
  EXPECT_EQ(t.loss.item(), diff::ops::mean(t.entropies).item());
}

TEST_F(ObjectiveTest, RegularizerArithmetic) {
  // gamma 1 -> 3 gives a squared drift of exactly 4.
  extractor.params().bn_layers()[0].gamma.mutable_values()[0] = 3.0f;
  config.lambda = 1e-4f;
  ObjectiveTerms t = temp_objective(extractor.forward(batch, diff::BnMode::RunningStats), gallery, extractor.params(),
                                    config);
  EXPECT_EQ(t.drift_squared, 4.0);
  const double mean_h = diff::ops::mean(t.entropies).item();
  EXPECT_NEAR(t.loss.item(), mean_h + 1e-4 * 4.0, 1e-6);
}

TEST_F(ObjectiveTest, GradientReachesOnlyBnAffine) {
  extractor.params().mask_bn_affine();
  ObjectiveTerms t = temp_objective(extractor.forward(batch, diff::BnMode::RunningStats), gallery, extractor.params(),
                                    config);
  t.loss.backward();
  bool any_affine_grad = false;
  for (std::size_t i = 0; i < extractor.params().size(); ++i) {
    const auto& e = extractor.params().entry(i);
    for (float g : e.value.grad_or_zero()) {
      if (!e.bn_affine) {
        EXPECT_EQ(g, 0.0f) << e.name;
      } else if (g != 0.0f) {
        any_affine_grad = true;
      }
    }
  }
  EXPECT_TRUE(any_affine_grad);
}

TEST_F(ObjectiveTest, ExplicitSelectionMustMatchShape) {
  std::vector<std::size_t> wrong(5, 0);
  EXPECT_THROW(temp_objective(extractor.forward(batch, diff::BnMode::RunningStats), gallery, extractor.params(),
                              config, nullptr, wrong),
               std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Predict

TEST(Predict, QueryEqualToGalleryRowRanksFirst) {
  Tensor gf = random_tensor({8, 4}, 31);
  GalleryStore g(std::vector<float>(gf.values().begin(), gf.values().end()), 4, cyclic_labels(8, 4), "");
  std::vector<float> q(gf.values().begin() + 5 * 4, gf.values().begin() + 6 * 4);
  Prediction p = predict(Tensor::from({1, 4}, q), g);
  EXPECT_EQ(p.top1[0], 5u);
  EXPECT_EQ(p.top1_identity[0], 1);
  EXPECT_EQ(p.ranked(0).size(), 8u);
}

TEST(Predict, SingleGallery) {
  GalleryStore g({0.5f, -1.0f}, 2, {7}, "");
  Prediction p = predict(random_tensor({5, 2}, 32), g);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(p.top1[i], 0u);
    EXPECT_EQ(p.top1_identity[i], 7);
  }
}

TEST(Predict, MatchesExhaustiveArgmax) {
  Tensor gf = random_tensor({20, 6}, 33);
  GalleryStore g(std::vector<float>(gf.values().begin(), gf.values().end()), 6, cyclic_labels(20, 7), "");
  Tensor q = random_tensor({10, 6}, 34);
  Tensor sims = similarity_matrix(q, g);
  Prediction p = predict(q, g);
  for (std::size_t i = 0; i < 10; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 20; ++j)
      if (sims.at(i * 20 + j) > sims.at(i * 20 + best)) best = j;
    EXPECT_EQ(p.top1[i], best);
    auto r = p.ranked(i);
    for (std::size_t j = 1; j < r.size(); ++j) {
      const float a = sims.at(i * 20 + r[j - 1]), b = sims.at(i * 20 + r[j]);
      EXPECT_TRUE(a > b || (a == b && r[j - 1] < r[j]));
    }
  }
}

TEST(Predict, TiesResolveToLowestIndex) {
  GalleryStore g({1, 0, 2, 0, 0, 1}, 2, {0, 1, 2}, "");
  Prediction p = predict(Tensor::from({1, 2}, {1, 0}), g);
  EXPECT_EQ(p.top1[0], 0u);
  EXPECT_EQ(std::vector<std::uint32_t>(p.ranked(0).begin(), p.ranked(0).end()), (std::vector<std::uint32_t>{0, 1, 2}));
}

// ---------------------------------------------------------------------------
// Online step

class AdaptTest : public ::testing::Test {
 protected:
  model::Extractor source = small_extractor(41);
  std::shared_ptr<const GalleryStore> gallery =
      std::make_shared<const GalleryStore>(build_gallery(source, random_tensor({40, 8}, 42), cyclic_labels(40, 10)));

  AdaptState fresh(float lr, float lambda = 1e-4f, std::size_t k = 10) {
    TempConfig c;
    c.k = k;
    c.learning_rate = lr;
    c.lambda = lambda;
    AdaptState s = AdaptState::create(source, c, 0);
    s.gallery = gallery;
    return s;
  }

  std::vector<Tensor> batches(std::size_t count, std::size_t size = 8, std::uint64_t seed = 43) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_tensor({size, 8}, seed + i, -1.5f, 1.5f));
    return out;
  }
};

TEST_F(AdaptTest, CreateMasksAndDisablesWeightDecay) {
  AdaptState s = fresh(1e-3f);
  EXPECT_EQ(s.adam.weight_decay, 0.0f);
  EXPECT_EQ(s.adam.learning_rate, 1e-3f);
  for (std::size_t i = 0; i < s.extractor.params().size(); ++i) {
    EXPECT_EQ(s.extractor.params().entry(i).trainable, s.extractor.params().entry(i).bn_affine);
  }
  EXPECT_EQ(s.extractor.params().drift_l2(), 0.0);
}

TEST_F(AdaptTest, PredictionsComeFromThePreStepState) {
  AdaptState s = fresh(5e-3f);
  for (const Tensor& b : batches(50)) {
    model::Extractor before = s.extractor.clone();
    Prediction expected = predict(model::extract_features(before, b), *gallery);
    StepResult r = temp_adapt_step(s, b);
    EXPECT_EQ(r.prediction, expected);
  }
  EXPECT_GT(s.extractor.params().drift_l2(), 0.0);
}

TEST_F(AdaptTest, ZeroLearningRateMatchesNoAdaptation) {
  AdaptState s = fresh(0.0f);
  for (const Tensor& b : batches(10)) {
    StepResult r = temp_adapt_step(s, b);
    EXPECT_EQ(r.prediction, predict(model::extract_features(source, b), *gallery));
  }
  EXPECT_EQ(s.extractor.params().drift_l2(), 0.0);
}

TEST_F(AdaptTest, FrozenTensorsAndStatisticsNeverChange) {
  AdaptState s = fresh(5e-3f);
  for (const Tensor& b : batches(100)) temp_adapt_step(s, b);
  const auto& p = s.extractor.params();
  EXPECT_TRUE(p.frozen_match_source());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.entry(i).bn_affine) continue;
    const auto v = p.tensor(i).values();
    const auto& src = source.params().tensor(i).values();
    EXPECT_TRUE(std::equal(v.begin(), v.end(), src.begin(), src.end())) << p.entry(i).name;
  }
  for (std::size_t l = 0; l < p.bn_layers().size(); ++l) {
    EXPECT_EQ(p.bn_layers()[l].running_mean, source.params().bn_layers()[l].running_mean);
    EXPECT_EQ(p.bn_layers()[l].running_var, source.params().bn_layers()[l].running_var);
  }
  EXPECT_GT(p.drift_l2(), 0.0);
}

TEST_F(AdaptTest, RepeatedBatchDescends) {
  AdaptState s = fresh(1e-4f);
  Tensor b = batches(1)[0];
  double previous = temp_adapt_step(s, b).loss;
  for (int i = 0; i < 9; ++i) {
    const double loss = temp_adapt_step(s, b).loss;
    EXPECT_LE(loss, previous + 1e-3);
    previous = loss;
  }
}

TEST_F(AdaptTest, DriftIsNonIncreasingInLambda) {
  std::vector<double> drifts;
  for (float lambda : {0.0f, 1e-4f, 1e-3f, 1e3f}) {
    AdaptState s = fresh(2e-3f, lambda);
    for (const Tensor& b : batches(60)) temp_adapt_step(s, b);
    drifts.push_back(s.extractor.params().drift_l2());
  }
  for (std::size_t i = 1; i < drifts.size(); ++i) EXPECT_LE(drifts[i], drifts[i - 1]) << "lambda index " << i;
  EXPECT_LT(drifts.back(), drifts.front());
}

TEST_F(AdaptTest, ReportsEntropyAndDrift) {
  AdaptState s = fresh(1e-3f);
  StepResult r = temp_adapt_step(s, batches(1)[0]);
  EXPECT_GT(r.mean_reid_entropy, 0.0);
  EXPECT_LE(r.mean_reid_entropy, std::log(10.0) + 1e-6);
  EXPECT_GE(r.loss, r.mean_reid_entropy - 1e-6);
  EXPECT_NEAR(r.drift_l2, s.extractor.params().drift_l2(), 1e-12);
}

TEST_F(AdaptTest, RejectsMissingGalleryAndWrongInput) {
  AdaptState s = fresh(1e-3f);
  s.gallery.reset();
  EXPECT_THROW(temp_adapt_step(s, batches(1)[0]), std::logic_error);
  AdaptState t = fresh(1e-3f);
  EXPECT_THROW(temp_adapt_step(t, random_tensor({4, 5}, 1)), std::invalid_argument);
}

TEST_F(AdaptTest, MethodWrapperMatchesFreeFunction) {
  TempConfig c;
  c.k = 10;
  c.learning_rate = 2e-3f;
  TempMethod method(source, c, 0);
  method.set_gallery(gallery);
  AdaptState s = fresh(2e-3f);
  for (const Tensor& b : batches(5)) {
    StepResult a = method.step(b);
    StepResult e = temp_adapt_step(s, b);
    EXPECT_EQ(a.prediction, e.prediction);
    EXPECT_EQ(a.loss, e.loss);
  }
  EXPECT_EQ(method.name(), "TEMP");
  TempMethod empty(source, c, 0);
  EXPECT_THROW(empty.gallery(), std::logic_error);
}
