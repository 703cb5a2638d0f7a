#include "temp/harness/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "temp/harness/records.hpp"

namespace temp::harness {

using nlohmann::json;

namespace {

// Shortest decimal that reads back as the same float, so JSON shows 0.15
// rather than 0.15000000596046448.
double decimal(float f) {
  char buf[32];
  for (int digits = 6; digits < 9; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, static_cast<double>(f));
    if (std::strtof(buf, nullptr) == f) return std::strtod(buf, nullptr);
  }
  return f;
}

std::string squash(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c != '-' && c != '_' && c != ' ') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::Temp: return "TEMP";
    case MethodKind::NoAdapt: return "NoAdapt";
    case MethodKind::BnAdapt: return "BnAdapt";
    case MethodKind::SourceTent: return "SourceTent";
  }
  return "unknown";
}

MethodKind parse_method(const std::string& name) {
  const std::string s = squash(name);
  if (s == "temp") return MethodKind::Temp;
  if (s == "noadapt") return MethodKind::NoAdapt;
  if (s == "bnadapt") return MethodKind::BnAdapt;
  if (s == "sourcetent" || s == "tent") return MethodKind::SourceTent;
  throw std::invalid_argument("unknown method '" + name + "'");
}

std::unique_ptr<core::AdaptationMethod> make_method(MethodKind kind, const model::Extractor& source,
                                                    const model::ClassifierHead* head, const MethodOptions& options,
                                                    std::uint64_t seed) {
  switch (kind) {
    case MethodKind::Temp: return std::make_unique<core::TempMethod>(source, options.temp, seed);
    case MethodKind::NoAdapt: return std::make_unique<baselines::NoAdaptMethod>(source, options.temp.k);
    case MethodKind::BnAdapt: {
      baselines::BnAdaptOptions bn = options.bn;
      bn.monitor_k = options.temp.k;
      return std::make_unique<baselines::BnAdaptMethod>(source, bn);
    }
    case MethodKind::SourceTent: {
      baselines::SourceTentOptions tent = options.tent;
      tent.monitor_k = options.temp.k;
      return std::make_unique<baselines::SourceTentMethod>(source, head, tent);
    }
  }
  throw std::logic_error("unreachable method kind");
}

StreamResult run_stream(core::AdaptationMethod& method, const scenario::ScenarioStream& stream,
                        const model::Extractor& source, const StreamOptions& options) {
  if (stream.phases.empty()) throw std::invalid_argument("stream has no phases");
  StreamResult out;
  std::size_t iteration = 0;
  for (const scenario::Phase& phase : stream.phases) {
    if (phase.gallery) {
      const std::string who = options.gallery_from_source ? "theta0" : "current";
      auto g = std::make_shared<const core::GalleryStore>(
          options.gallery_from_source ? core::build_gallery(source, phase.gallery->all(), phase.gallery->labels)
                                      : method.extract_gallery(phase.gallery->all(), phase.gallery->labels));
      out.gallery_tags.push_back(who + "/" + g->tag());
      method.set_gallery(std::move(g));
    }
    if (!method.has_gallery()) throw std::logic_error("stream starts without a gallery");
    for (const scenario::QueryBatch& batch : phase.batches) {
      const auto t0 = std::chrono::steady_clock::now();
      core::StepResult r = method.step(batch.inputs);
      const auto t1 = std::chrono::steady_clock::now();
      MetricsRecord rec;
      rec.run_id = options.run_id;
      rec.method = method.name();
      rec.seed = options.seed;
      rec.phase = phase.index;
      rec.iteration = iteration++;
      rec.batch_size = batch.labels.size();
      rec.cmc_top1 = cmc_top1(r.prediction.top1, method.gallery().labels(), batch.labels);
      rec.mean_reid_entropy = r.mean_reid_entropy;
      rec.loss = r.loss;
      rec.param_drift_l2 = r.drift_l2;
      rec.wallclock_ms_per_image =
          std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(batch.labels.size());
      rec.strength = phase.strength;
      out.records.push_back(std::move(rec));
      if (options.on_step) options.on_step(phase, batch, r);
    }
  }
  return out;
}

std::uint64_t stream_seed_for(std::uint64_t scenario_seed, std::uint64_t run_seed) {
  return splitmix64(scenario_seed ^ splitmix64(run_seed));
}

std::vector<SeedRun> run_seeds(MethodKind kind, const MethodOptions& options, const scenario::ScenarioConfig& scenario,
                               const scenario::SyntheticWorld& world, const SourceModel& source,
                               const std::vector<std::uint64_t>& seeds, bool gallery_from_source) {
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  options.temp.validate();
  if (model::sample_shape(source.extractor.config().input) != model::sample_shape(world.config.input)) {
    throw std::invalid_argument("model input does not match the scenario world");
  }
  std::vector<SeedRun> runs;
  for (std::uint64_t seed : seeds) {
    scenario::ScenarioStream stream = scenario::make_stream(scenario, world, options.temp.batch_size,
                                                            stream_seed_for(scenario.stream_seed, seed));
    SeedRun run;
    run.seed = seed;
    run.method = make_method(kind, source.extractor, source.head ? &*source.head : nullptr, options, seed);
    StreamOptions so;
    so.run_id = to_string(kind) + "-s" + std::to_string(seed);
    so.seed = seed;
    so.gallery_from_source = gallery_from_source;
    run.records = run_stream(*run.method, stream, source.extractor, so).records;
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<MetricsRecord> all_records(const std::vector<SeedRun>& runs) {
  std::vector<MetricsRecord> out;
  for (const auto& r : runs) out.insert(out.end(), r.records.begin(), r.records.end());
  return out;
}

namespace {

// seed -> phase -> records
std::map<std::uint64_t, std::map<std::size_t, std::vector<MetricsRecord>>> group(
    const std::vector<MetricsRecord>& records) {
  std::map<std::uint64_t, std::map<std::size_t, std::vector<MetricsRecord>>> g;
  for (const auto& r : records) g[r.seed][r.phase].push_back(r);
  return g;
}

double mean_entropy(const std::vector<MetricsRecord>& rs) {
  double s = 0.0;
  for (const auto& r : rs) s += r.mean_reid_entropy;
  return s / static_cast<double>(rs.size());
}

}  // namespace

std::vector<PhaseSummary> summarize(const std::vector<MetricsRecord>& records) {
  auto g = group(records);
  std::map<std::size_t, PhaseSummary> phases;
  std::map<std::size_t, std::vector<double>> entropies;
  for (auto& [seed, by_phase] : g) {
    for (auto& [phase, rs] : by_phase) {
      PhaseSummary& p = phases[phase];
      p.phase = phase;
      p.strength = rs.front().strength;
      p.cmc_per_seed.push_back(phase_average(rs));
      entropies[phase].push_back(mean_entropy(rs));
    }
  }
  std::vector<PhaseSummary> out;
  for (auto& [phase, p] : phases) {
    p.cmc = mean_std(p.cmc_per_seed);
    p.entropy = mean_std(entropies[phase]);
    out.push_back(std::move(p));
  }
  return out;
}

MeanStd overall_cmc(const std::vector<MetricsRecord>& records) {
  std::vector<double> per_seed;
  for (auto& [seed, by_phase] : group(records)) {
    double s = 0.0;
    for (auto& [phase, rs] : by_phase) s += phase_average(rs);
    per_seed.push_back(s / static_cast<double>(by_phase.size()));
  }
  return mean_std(per_seed);
}

json summary_json(const std::string& method, const std::vector<MetricsRecord>& records) {
  json phases = json::array();
  for (const PhaseSummary& p : summarize(records)) {
    json j = {{"phase", p.phase},
              {"cmc_top1_mean", p.cmc.mean},
              {"cmc_top1_std", p.cmc.std},
              {"mean_reid_entropy_mean", p.entropy.mean},
              {"mean_reid_entropy_std", p.entropy.std},
              {"cmc_top1_per_seed", p.cmc_per_seed}};
    if (p.strength) j["strength"] = *p.strength;
    phases.push_back(std::move(j));
  }
  const MeanStd overall = overall_cmc(records);
  double ms = 0.0;
  for (const auto& r : records) ms += r.wallclock_ms_per_image;
  std::set<std::uint64_t> seeds;
  for (const auto& r : records) seeds.insert(r.seed);
  return {{"method", method},
          {"seeds", std::vector<std::uint64_t>(seeds.begin(), seeds.end())},
          {"phases", phases},
          {"overall_cmc_top1_mean", overall.mean},
          {"overall_cmc_top1_std", overall.std},
          {"wallclock_ms_per_image_mean", records.empty() ? 0.0 : ms / static_cast<double>(records.size())}};
}

void RunConfig::validate() const {
  options.temp.validate();
  if (seeds.empty()) throw std::invalid_argument("run config needs at least one seed");
  if (scenario_path.empty()) throw std::invalid_argument("run config needs a scenario file");
  if (checkpoint_path.empty() && !pretrain_inline) {
    throw std::invalid_argument("run config needs a checkpoint or inline pretraining");
  }
}

RunConfig run_config_from_json(const json& j) {
  static const std::set<std::string> allowed = {
      "method",     "k",          "lambda",         "learning_rate",      "selection",          "batch_size",
      "scenario",   "seeds",      "out",            "checkpoint",         "pretrain_inline",    "pretrain",
      "bn_momentum", "tent_learning_rate", "tent_running_stats", "gallery_from_source"};
  if (!j.is_object()) throw std::invalid_argument("run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw std::invalid_argument("unknown key '" + key + "' in run config");
  }
  RunConfig c;
  if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
  c.options.temp.k = j.value("k", c.options.temp.k);
  c.options.temp.lambda = j.value("lambda", c.options.temp.lambda);
  c.options.temp.learning_rate = j.value("learning_rate", c.options.temp.learning_rate);
  if (j.contains("selection")) c.options.temp.selection = core::parse_selection(j.at("selection").get<std::string>());
  c.scenario_path = j.value("scenario", c.scenario_path);
  if (j.contains("batch_size")) {
    c.options.temp.batch_size = j.at("batch_size").get<std::size_t>();
  } else if (!c.scenario_path.empty() && std::filesystem::exists(c.scenario_path)) {
    c.options.temp.batch_size = scenario::load_scenario(c.scenario_path).batch_size;
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.out_dir = j.value("out", c.out_dir);
  c.checkpoint_path = j.value("checkpoint", c.checkpoint_path);
  c.pretrain_inline = j.value("pretrain_inline", c.pretrain_inline);
  c.gallery_from_source = j.value("gallery_from_source", c.gallery_from_source);
  c.options.bn.momentum = j.value("bn_momentum", c.options.bn.momentum);
  c.options.tent.learning_rate = j.value("tent_learning_rate", c.options.temp.learning_rate);
  c.options.tent.use_running_stats = j.value("tent_running_stats", c.options.tent.use_running_stats);
  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    for (const auto& [key, value] : p.items()) {
      static const std::set<std::string> keys = {"epochs", "learning_rate", "P", "K", "weight_decay", "seed"};
      if (!keys.count(key)) throw std::invalid_argument("unknown key '" + key + "' in pretrain");
    }
    c.pretrain.epochs = p.value("epochs", c.pretrain.epochs);
    c.pretrain.learning_rate = p.value("learning_rate", c.pretrain.learning_rate);
    c.pretrain.identities_per_batch = p.value("P", c.pretrain.identities_per_batch);
    c.pretrain.instances_per_identity = p.value("K", c.pretrain.instances_per_identity);
    c.pretrain.weight_decay = p.value("weight_decay", c.pretrain.weight_decay);
    c.pretrain.seed = p.value("seed", c.pretrain.seed);
  }
  return c;
}

json to_json(const RunConfig& c) {
  return {{"method", to_string(c.method)},
          {"k", c.options.temp.k},
          {"lambda", decimal(c.options.temp.lambda)},
          {"learning_rate", decimal(c.options.temp.learning_rate)},
          {"selection", core::to_string(c.options.temp.selection)},
          {"batch_size", c.options.temp.batch_size},
          {"scenario", c.scenario_path},
          {"seeds", c.seeds},
          {"out", c.out_dir},
          {"checkpoint", c.checkpoint_path},
          {"pretrain_inline", c.pretrain_inline},
          {"gallery_from_source", c.gallery_from_source},
          {"bn_momentum", decimal(c.options.bn.momentum)},
          {"tent_learning_rate", decimal(c.options.tent.learning_rate)},
          {"tent_running_stats", c.options.tent.use_running_stats},
          {"pretrain",
           {{"epochs", c.pretrain.epochs},
            {"learning_rate", decimal(c.pretrain.learning_rate)},
            {"P", c.pretrain.identities_per_batch},
            {"K", c.pretrain.instances_per_identity},
            {"weight_decay", decimal(c.pretrain.weight_decay)},
            {"seed", c.pretrain.seed}}}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("cannot parse " + path + ": " + e.what());
  }
  // Input paths are relative to the config file.
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  for (const char* key : {"scenario", "checkpoint"}) {
    if (j.is_object() && j.contains(key) && j.at(key).is_string()) {
      const std::filesystem::path p = j.at(key).get<std::string>();
      if (!p.empty() && p.is_relative()) j[key] = (base / p).lexically_normal().string();
    }
  }
  return run_config_from_json(j);
}

SourceModel pretrain_source(const scenario::SyntheticWorld& world, const model::PretrainConfig& config,
                            std::uint64_t model_seed) {
  if (world.train.size() == 0) throw std::invalid_argument("world has no training split");
  model::ExtractorConfig ec;
  if (const auto* v = std::get_if<model::VectorInput>(&world.config.input)) {
    ec = model::ExtractorConfig::for_vectors(v->dim, model_seed);
  } else {
    const auto& img = std::get<model::ImageInput>(world.config.input);
    ec = model::ExtractorConfig::for_images(img.channels, img.height, img.width, model_seed);
  }
  model::PretrainResult r = model::pretrain(world.train, ec, config);
  return SourceModel{std::move(r.extractor), std::move(r.head)};
}

SourceModel load_source(const std::string& checkpoint_path) {
  model::Checkpoint c = model::load_checkpoint(checkpoint_path);
  c.extractor.params().snapshot();
  return SourceModel{std::move(c.extractor), std::move(c.head)};
}

std::vector<MetricsRecord> run_experiment(const RunConfig& config) {
  config.validate();
  scenario::ScenarioConfig sc = scenario::load_scenario(config.scenario_path);
  scenario::SyntheticWorld world = scenario::generate_world(sc.world);

  std::optional<SourceModel> source;
  if (!config.checkpoint_path.empty() && std::filesystem::exists(config.checkpoint_path)) {
    source = load_source(config.checkpoint_path);
  } else if (config.pretrain_inline) {
    source = pretrain_source(world, config.pretrain, config.pretrain.seed);
    if (!config.checkpoint_path.empty()) {
      model::save_checkpoint(config.checkpoint_path, source->extractor, source->head ? &*source->head : nullptr);
    }
  } else {
    throw std::runtime_error("checkpoint " + config.checkpoint_path + " does not exist");
  }

  auto runs = run_seeds(config.method, config.options, sc, world, *source, config.seeds, config.gallery_from_source);
  std::vector<MetricsRecord> records = all_records(runs);

  std::filesystem::create_directories(config.out_dir);
  const std::filesystem::path out(config.out_dir);
  write_metrics_csv((out / "metrics.csv").string(), records);
  write_file_atomic((out / "summary.json").string(), summary_json(to_string(config.method), records).dump(2) + "\n");
  write_file_atomic((out / "scenario.json").string(), scenario::to_json(sc).dump(2) + "\n");
  write_file_atomic((out / "run.json").string(), to_json(config).dump(2) + "\n");
  for (const SeedRun& r : runs) {
    model::save_checkpoint((out / ("final_seed" + std::to_string(r.seed) + ".ckpt")).string(),
                           r.method->current_model(), source->head ? &*source->head : nullptr);
  }
  return records;
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::K: return "k";
    case SweepAxis::BatchSize: return "batch_size";
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::Selection: return "selection";
  }
  return "unknown";
}

SweepAxis parse_axis(const std::string& name) {
  const std::string s = squash(name);
  if (s == "k") return SweepAxis::K;
  if (s == "batchsize") return SweepAxis::BatchSize;
  if (s == "lambda") return SweepAxis::Lambda;
  if (s == "selection") return SweepAxis::Selection;
  throw std::invalid_argument("unknown sweep axis '" + name + "'");
}

std::vector<std::string> default_axis_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::K: return {"1", "10", "50", "100"};
    case SweepAxis::BatchSize: return {"64", "32", "16", "8", "2", "1"};
    case SweepAxis::Lambda: return {"0", "0.0001", "0.001"};
    case SweepAxis::Selection: return {"topk", "bottomk", "topbottom", "random"};
  }
  return {};
}

namespace {

MethodOptions with_axis_value(const MethodOptions& base, SweepAxis axis, const std::string& value) {
  MethodOptions o = base;
  switch (axis) {
    case SweepAxis::K: o.temp.k = std::stoul(value); break;
    case SweepAxis::BatchSize: o.temp.batch_size = std::stoul(value); break;
    case SweepAxis::Lambda: o.temp.lambda = std::stof(value); break;
    case SweepAxis::Selection: o.temp.selection = core::parse_selection(value); break;
  }
  return o;
}

std::string error_tag(const std::exception& e) {
  std::string s = e.what();
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '"') c = ';';
  }
  return "error: " + s;
}

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace

const char* const kSweepHeader =
    "axis,value,method,seed,phase,cmc_top1,mean_reid_entropy,final_param_drift_l2,wallclock_ms_per_image,error";

std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<std::string>& values,
                            const std::vector<MethodKind>& methods, const MethodOptions& base,
                            const scenario::ScenarioConfig& scenario, const scenario::SyntheticWorld& world,
                            const SourceModel& source, const std::vector<std::uint64_t>& seeds,
                            bool gallery_from_source) {
  std::vector<SweepRow> rows;
  for (const std::string& value : values) {
    for (MethodKind kind : methods) {
      for (std::uint64_t seed : seeds) {
        SweepRow head;
        head.axis = to_string(axis);
        head.value = value;
        head.method = to_string(kind);
        head.seed = seed;
        try {
          MethodOptions o = with_axis_value(base, axis, value);
          auto runs = run_seeds(kind, o, scenario, world, source, {seed}, gallery_from_source);
          const auto& recs = runs.front().records;
          for (const PhaseSummary& p : summarize(recs)) {
            SweepRow r = head;
            r.phase = p.phase;
            r.cmc_top1 = p.cmc.mean;
            r.mean_reid_entropy = p.entropy.mean;
            rows.push_back(std::move(r));
          }
          SweepRow total = head;
          total.cmc_top1 = overall_cmc(recs).mean;
          double h = 0.0, ms = 0.0;
          for (const auto& r : recs) {
            h += r.mean_reid_entropy;
            ms += r.wallclock_ms_per_image;
          }
          total.mean_reid_entropy = h / static_cast<double>(recs.size());
          total.wallclock_ms_per_image = ms / static_cast<double>(recs.size());
          total.final_param_drift_l2 = recs.back().param_drift_l2;
          rows.push_back(std::move(total));
        } catch (const diff::DegenerateBatchError&) {
          head.error = "degenerate_batch";
          rows.push_back(std::move(head));
        } catch (const std::exception& e) {
          head.error = error_tag(e);
          rows.push_back(std::move(head));
        }
      }
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << kSweepHeader << "\n";
  for (const SweepRow& r : rows) {
    out << r.axis << ',' << r.value << ',' << r.method << ',' << r.seed << ','
        << (r.phase ? std::to_string(*r.phase) : "") << ',' << cell(r.cmc_top1) << ',' << cell(r.mean_reid_entropy)
        << ',' << cell(r.final_param_drift_l2) << ',' << cell(r.wallclock_ms_per_image) << ',' << r.error << "\n";
  }
  return out.str();
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  write_file_atomic(path, sweep_csv(rows));
}

}  // namespace temp::harness
