#include "temp/core/temp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "temp/diff/ops.hpp"

namespace temp::core {

using diff::Tensor;
using diff::detail::Node;

std::string to_string(Selection s) {
  switch (s) {
    case Selection::TopK: return "topk";
    case Selection::BottomK: return "bottomk";
    case Selection::TopBottom: return "topbottom";
    case Selection::Random: return "random";
  }
  return "unknown";
}

Selection parse_selection(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c != '-' && c != '_') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "topk") return Selection::TopK;
  if (s == "bottomk") return Selection::BottomK;
  if (s == "topbottom") return Selection::TopBottom;
  if (s == "random") return Selection::Random;
  throw std::invalid_argument("unknown selection strategy '" + name + "'");
}

void TempConfig::validate() const {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (selection == Selection::TopBottom && k % 2 != 0) throw std::invalid_argument("top-bottom selection needs even k");
  if (!(lambda >= 0.0f) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be nonnegative");
  if (!(learning_rate >= 0.0f) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be nonnegative");
  }
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
}

Tensor similarity_matrix(const Tensor& query_features, const GalleryStore& gallery) {
  if (query_features.rank() != 2 || query_features.dim(1) != gallery.dim()) {
    throw std::invalid_argument("query features " + diff::shape_string(query_features.shape()) +
                                " do not match gallery dimension " + std::to_string(gallery.dim()));
  }
  return diff::ops::matmul_nt(diff::ops::l2_normalize_rows(query_features, 1e-12f), gallery.normalized());
}

namespace {

// Descending similarity, ties to the lower index.
std::vector<std::size_t> descending_order(std::span<const float> row) {
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  return idx;
}

}  // namespace

std::vector<std::size_t> select_galleries(std::span<const float> row, std::size_t k, Selection strategy,
                                          std::mt19937_64* rng) {
  const std::size_t n = row.size();
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (k > n) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds gallery size " + std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  switch (strategy) {
    case Selection::TopK: {
      std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                        [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
      idx.resize(k);
      return idx;
    }
    case Selection::BottomK: {
      std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                        [&](std::size_t a, std::size_t b) { return row[a] < row[b] || (row[a] == row[b] && a < b); });
      idx.resize(k);
      return idx;
    }
    case Selection::TopBottom: {
      if (k % 2 != 0) throw std::invalid_argument("top-bottom selection needs even k");
      std::vector<std::size_t> order = descending_order(row);
      std::vector<std::size_t> out(order.begin(), order.begin() + k / 2);
      out.insert(out.end(), order.end() - k / 2, order.end());
      return out;
    }
    case Selection::Random: {
      if (!rng) throw std::invalid_argument("random selection needs a seeded generator");
      for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(*rng)]);
      }
      idx.resize(k);
      return idx;
    }
  }
  throw std::logic_error("unreachable selection strategy");
}

std::vector<std::size_t> select_rows(const Tensor& similarities, std::size_t k, Selection strategy,
                                     std::mt19937_64* rng) {
  const std::size_t m = similarities.dim(0), n = similarities.dim(1);
  std::vector<std::size_t> out;
  out.reserve(m * k);
  for (std::size_t i = 0; i < m; ++i) {
    auto sel = select_galleries(similarities.values().subspan(i * n, n), k, strategy, rng);
    out.insert(out.end(), sel.begin(), sel.end());
  }
  return out;
}

Tensor selection_probabilities(const Tensor& selected_similarities) {
  return diff::ops::softmax_rows(selected_similarities);
}

Tensor reid_entropy(const Tensor& probabilities) {
  if (probabilities.rank() != 2) throw std::invalid_argument("reid_entropy expects an m x k matrix");
  const std::size_t m = probabilities.dim(0), k = probabilities.dim(1);
  if (k == 0) throw std::invalid_argument("reid_entropy needs k >= 1");
  const auto p = probabilities.values();
  const double cap = std::log(static_cast<double>(k));
  std::vector<float> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double h = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = p[i * k + j];
      if (!(v >= 0.0)) throw std::domain_error("reid_entropy: negative or non-finite probability");
      if (v > 0.0) h -= v * std::log(v);
    }
    out[i] = static_cast<float>(std::clamp(h, 0.0, cap));
  }
  return Tensor::make_result({m}, std::move(out), {probabilities}, [m, k](Node& self) {
    Node& in = *self.inputs[0];
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const float v = in.value[i * k + j];
        // d/dp (-p log p) = -(log p + 1); p = 0 contributes nothing.
        if (v > 0.0f) g[i * k + j] -= self.grad[i] * (std::log(v) + 1.0f);
      }
    }
  });
}

ObjectiveTerms temp_objective(const Tensor& query_features, const GalleryStore& gallery,
                              const model::ParameterSet& params, const TempConfig& config, std::mt19937_64* rng,
                              std::span<const std::size_t> selected) {
  config.validate();
  if (query_features.rank() != 2 || query_features.dim(0) == 0) {
    throw std::invalid_argument("temp_objective needs a nonempty query batch");
  }
  ObjectiveTerms t;
  t.similarities = similarity_matrix(query_features, gallery);
  const std::size_t m = query_features.dim(0);
  if (selected.empty()) {
    t.selected = select_rows(t.similarities, config.k, config.selection, rng);
  } else {
    if (selected.size() != m * config.k) throw std::invalid_argument("selection does not match batch and k");
    t.selected.assign(selected.begin(), selected.end());
  }
  Tensor gathered = diff::ops::gather_columns(t.similarities, t.selected, config.k);
  t.entropies = reid_entropy(selection_probabilities(gathered));
  Tensor loss = diff::ops::mean(t.entropies);

  Tensor drift;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor term = diff::ops::squared_distance(params.tensor(i), params.entry(i).source);
    t.drift_squared += term.item();
    drift = drift.defined() ? diff::ops::add(drift, term) : term;
  }
  if (drift.defined()) loss = diff::ops::add(loss, diff::ops::scale(drift, config.lambda));
  t.loss = loss;
  return t;
}

Prediction rank_similarities(std::span<const float> similarities, std::size_t queries, const GalleryStore& gallery) {
  const std::size_t n = gallery.size();
  if (similarities.size() != queries * n) throw std::invalid_argument("similarity matrix does not match gallery");
  Prediction p;
  p.queries = queries;
  p.galleries = n;
  p.ranking.reserve(queries * n);
  for (std::size_t q = 0; q < queries; ++q) {
    std::vector<std::size_t> order = descending_order(similarities.subspan(q * n, n));
    for (std::size_t j : order) p.ranking.push_back(static_cast<std::uint32_t>(j));
    p.top1.push_back(order.front());
    p.top1_identity.push_back(gallery.labels()[order.front()]);
  }
  return p;
}

Prediction predict(const Tensor& query_features, const GalleryStore& gallery) {
  diff::NoGradGuard guard;
  Tensor sims = similarity_matrix(query_features, gallery);
  return rank_similarities(sims.values(), query_features.dim(0), gallery);
}

}  // namespace temp::core
