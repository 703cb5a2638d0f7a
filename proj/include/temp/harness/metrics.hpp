#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace temp::harness {

/// One row per processed batch. Column order in CSV follows field order.
struct MetricsRecord {
  std::string run_id;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t phase = 0;
  std::size_t iteration = 0;
  std::size_t batch_size = 0;
  double cmc_top1 = 0.0;
  double mean_reid_entropy = 0.0;
  double loss = 0.0;
  double param_drift_l2 = 0.0;
  double wallclock_ms_per_image = 0.0;
  std::optional<double> strength;
};

/// Fraction of queries whose rank-1 gallery carries the query identity.
double cmc_top1(std::span<const std::size_t> predicted_top1, std::span<const int> gallery_labels,
                std::span<const int> query_labels);

/// Unweighted mean of cmc_top1 over the records (one phase's batches).
double phase_average(std::span<const MetricsRecord> records);

/// Records grouped by phase, in phase order.
std::vector<std::vector<MetricsRecord>> split_by_phase(std::span<const MetricsRecord> records);

/// y0 = v0; y_t = alpha * y_{t-1} + (1 - alpha) * v_t, alpha in (0, 1].
std::vector<double> ema_series(std::span<const double> values, double alpha = 0.9);

/// Spearman rank correlation; ties get their average rank.
double spearman(std::span<const double> x, std::span<const double> y);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one value
};
MeanStd mean_std(std::span<const double> values);

}  // namespace temp::harness
