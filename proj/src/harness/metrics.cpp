#include "temp/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace temp::harness {

double cmc_top1(std::span<const std::size_t> predicted_top1, std::span<const int> gallery_labels,
                std::span<const int> query_labels) {
  if (query_labels.empty()) throw std::invalid_argument("cmc_top1 needs at least one query");
  if (predicted_top1.size() != query_labels.size()) throw std::invalid_argument("cmc_top1: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < query_labels.size(); ++i) {
    if (predicted_top1[i] >= gallery_labels.size()) throw std::out_of_range("cmc_top1: gallery index out of range");
    hits += gallery_labels[predicted_top1[i]] == query_labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(query_labels.size());
}

double phase_average(std::span<const MetricsRecord> records) {
  if (records.empty()) throw std::invalid_argument("phase_average of an empty phase");
  double s = 0.0;
  for (const auto& r : records) s += r.cmc_top1;
  return s / static_cast<double>(records.size());
}

std::vector<std::vector<MetricsRecord>> split_by_phase(std::span<const MetricsRecord> records) {
  std::map<std::size_t, std::vector<MetricsRecord>> by_phase;
  for (const auto& r : records) by_phase[r.phase].push_back(r);
  std::vector<std::vector<MetricsRecord>> out;
  for (auto& [phase, rs] : by_phase) out.push_back(std::move(rs));
  return out;
}

std::vector<double> ema_series(std::span<const double> values, double alpha) {
  if (values.empty()) throw std::invalid_argument("ema_series of an empty series");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("EMA alpha must lie in (0, 1]");
  std::vector<double> out(values.size());
  out[0] = values[0];
  for (std::size_t t = 1; t < values.size(); ++t) out[t] = alpha * out[t - 1] + (1.0 - alpha) * values[t];
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs two equal series of n >= 2");
  auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_std of no values");
  MeanStd m;
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double s = 0.0;
    for (double v : values) s += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(s / static_cast<double>(values.size() - 1));
  }
  return m;
}

}  // namespace temp::harness
