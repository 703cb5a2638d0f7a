#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "temp/baselines/baselines.hpp"
#include "temp/core/adapt.hpp"
#include "temp/harness/metrics.hpp"
#include "temp/model/checkpoint.hpp"
#include "temp/model/pretrain.hpp"
#include "temp/scenario/scenario_file.hpp"

namespace temp::harness {

enum class MethodKind { Temp, NoAdapt, BnAdapt, SourceTent };

std::string to_string(MethodKind kind);
/// Accepts TEMP, NoAdapt, BnAdapt, SourceTent (case and '-'/'_' ignored).
MethodKind parse_method(const std::string& name);

struct MethodOptions {
  core::TempConfig temp;
  baselines::BnAdaptOptions bn;
  baselines::SourceTentOptions tent;
};

std::unique_ptr<core::AdaptationMethod> make_method(MethodKind kind, const model::Extractor& source,
                                                    const model::ClassifierHead* head, const MethodOptions& options,
                                                    std::uint64_t seed);

/// Pretrained source model: theta0 plus the classifier head if one exists.
struct SourceModel {
  model::Extractor extractor;
  std::optional<model::ClassifierHead> head;
};

struct StreamOptions {
  std::string run_id;
  std::uint64_t seed = 0;
  /// Extract galleries with theta0 instead of the method's current model.
  bool gallery_from_source = false;
  /// Called after every step with the batch and what the method reported.
  std::function<void(const scenario::Phase&, const scenario::QueryBatch&, const core::StepResult&)> on_step;
};

struct StreamResult {
  std::vector<MetricsRecord> records;
  std::vector<std::string> gallery_tags;
};

/// Feeds every batch of `stream` through `method` in order, rebuilding the
/// gallery whenever a phase asks for it. One record per batch.
StreamResult run_stream(core::AdaptationMethod& method, const scenario::ScenarioStream& stream,
                        const model::Extractor& source, const StreamOptions& options);

/// Stream seed for one run seed, derived from the scenario's stream seed.
std::uint64_t stream_seed_for(std::uint64_t scenario_seed, std::uint64_t run_seed);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  std::unique_ptr<core::AdaptationMethod> method;
};

/// One run per seed: fresh method from the source model, freshly shuffled
/// stream with the given batch size.
std::vector<SeedRun> run_seeds(MethodKind kind, const MethodOptions& options, const scenario::ScenarioConfig& scenario,
                               const scenario::SyntheticWorld& world, const SourceModel& source,
                               const std::vector<std::uint64_t>& seeds, bool gallery_from_source = false);

std::vector<MetricsRecord> all_records(const std::vector<SeedRun>& runs);

struct PhaseSummary {
  std::size_t phase = 0;
  std::optional<double> strength;
  MeanStd cmc;
  MeanStd entropy;
  std::vector<double> cmc_per_seed;
};

/// Per phase: phase_average for each seed, then mean and std across seeds.
std::vector<PhaseSummary> summarize(const std::vector<MetricsRecord>& records);
/// Mean over phases of per-phase means, per seed, then across seeds.
MeanStd overall_cmc(const std::vector<MetricsRecord>& records);
nlohmann::json summary_json(const std::string& method, const std::vector<MetricsRecord>& records);

struct RunConfig {
  MethodKind method = MethodKind::Temp;
  MethodOptions options;
  std::string scenario_path;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string out_dir = "out";
  /// Pretrained checkpoint. When empty or missing and `pretrain_inline` is
  /// set, the source model is trained from the scenario world first.
  std::string checkpoint_path;
  bool pretrain_inline = false;
  model::PretrainConfig pretrain;
  bool gallery_from_source = false;

  void validate() const;
};

/// Missing keys keep defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::string& path);

/// Trains a source model on the world's training split.
SourceModel pretrain_source(const scenario::SyntheticWorld& world, const model::PretrainConfig& config,
                            std::uint64_t model_seed);
SourceModel load_source(const std::string& checkpoint_path);

/// Writes metrics.csv, summary.json, scenario.json and one
/// final_seed<N>.ckpt per seed into config.out_dir.
std::vector<MetricsRecord> run_experiment(const RunConfig& config);

enum class SweepAxis { K, BatchSize, Lambda, Selection };
std::string to_string(SweepAxis axis);
SweepAxis parse_axis(const std::string& name);
/// k {1,10,50,100}; batch size {64,32,16,8,2,1}; lambda {0,1e-4,1e-3};
/// selection: all strategies.
std::vector<std::string> default_axis_values(SweepAxis axis);

/// One result row of a sweep: a phase of one (value, method, seed) cell, or
/// the whole cell when phase is empty. Failed cells carry only the error tag.
struct SweepRow {
  std::string axis;
  std::string value;
  std::string method;
  std::uint64_t seed = 0;
  std::optional<std::size_t> phase;
  std::optional<double> cmc_top1;
  std::optional<double> mean_reid_entropy;
  std::optional<double> final_param_drift_l2;
  std::optional<double> wallclock_ms_per_image;
  std::string error;
};

extern const char* const kSweepHeader;

/// Runs every (value, method, seed) cell; a failing cell is recorded with an
/// error tag ("degenerate_batch" for single-sample batch statistics) and
/// the sweep continues.
std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<std::string>& values,
                            const std::vector<MethodKind>& methods, const MethodOptions& base,
                            const scenario::ScenarioConfig& scenario, const scenario::SyntheticWorld& world,
                            const SourceModel& source, const std::vector<std::uint64_t>& seeds,
                            bool gallery_from_source = false);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace temp::harness
