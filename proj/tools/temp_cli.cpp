// Command-line front end: pretrain, adapt, sweep, dump-features, gradcheck.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "temp/harness/features.hpp"
#include "temp/harness/records.hpp"
#include "temp/harness/runner.hpp"
#include "temp/reference/reference.hpp"

using namespace temp;
namespace fs = std::filesystem;

namespace {

// Flags shared by adapt and sweep. Empty optionals leave the config alone.
struct Overrides {
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string scenario;
  std::string checkpoint;
  std::optional<std::size_t> k;
  std::optional<float> lambda;
  std::optional<float> learning_rate;
  std::optional<std::size_t> batch_size;
  std::string selection;
  bool pretrain_inline = false;

  void add_to(CLI::App& app) {
    app.add_option("--method", method, "TEMP, NoAdapt, BnAdapt or SourceTent");
    app.add_option("--seed", seeds, "Run seeds, e.g. --seed 0 1 2")->expected(1, -1);
    app.add_option("--out", out, "Output directory");
    app.add_option("--scenario", scenario, "Scenario JSON");
    app.add_option("--checkpoint", checkpoint, "Source checkpoint");
    app.add_option("--k", k, "Top-k galleries per query");
    app.add_option("--lambda", lambda, "Weight of the pull towards the source parameters");
    app.add_option("--lr", learning_rate, "Adam learning rate");
    app.add_option("--batch-size", batch_size, "Query batch size");
    app.add_option("--selection", selection, "TopK, BottomK, TopBottom or Random");
    app.add_flag("--pretrain-inline", pretrain_inline, "Pretrain the source model when no checkpoint exists");
  }

  harness::RunConfig apply(const std::string& config_path) const {
    harness::RunConfig c = config_path.empty() ? harness::RunConfig{} : harness::load_run_config(config_path);
    if (!method.empty()) c.method = harness::parse_method(method);
    if (!seeds.empty()) c.seeds = seeds;
    if (!out.empty()) c.out_dir = out;
    if (!scenario.empty()) {
      c.scenario_path = scenario;
      if (!batch_size && config_path.empty()) c.options.temp.batch_size = scenario::load_scenario(scenario).batch_size;
    }
    if (!checkpoint.empty()) c.checkpoint_path = checkpoint;
    if (k) c.options.temp.k = *k;
    if (lambda) c.options.temp.lambda = *lambda;
    if (learning_rate) c.options.temp.learning_rate = *learning_rate;
    if (batch_size) c.options.temp.batch_size = *batch_size;
    if (!selection.empty()) c.options.temp.selection = core::parse_selection(selection);
    if (pretrain_inline) c.pretrain_inline = true;
    c.validate();
    return c;
  }
};

harness::SourceModel source_for(const harness::RunConfig& c, const scenario::SyntheticWorld& world) {
  if (!c.checkpoint_path.empty() && fs::exists(c.checkpoint_path)) return harness::load_source(c.checkpoint_path);
  if (!c.pretrain_inline) throw std::runtime_error("checkpoint " + c.checkpoint_path + " does not exist");
  return harness::pretrain_source(world, c.pretrain, c.pretrain.seed);
}

void print_summary(const std::string& method, const std::vector<harness::MetricsRecord>& records) {
  for (const harness::PhaseSummary& p : harness::summarize(records)) {
    std::printf("%-10s phase %zu", method.c_str(), p.phase);
    if (p.strength) std::printf(" (strength %g)", *p.strength);
    std::printf("  cmc %.4f +- %.4f  entropy %.4f\n", p.cmc.mean, p.cmc.std, p.entropy.mean);
  }
  const harness::MeanStd o = harness::overall_cmc(records);
  std::printf("%-10s overall cmc %.4f +- %.4f\n", method.c_str(), o.mean, o.std);
}

int cmd_pretrain(const std::string& scenario_path, const std::string& out, std::optional<std::size_t> epochs,
                 std::uint64_t seed) {
  scenario::ScenarioConfig sc = scenario::load_scenario(scenario_path);
  scenario::SyntheticWorld world = scenario::generate_world(sc.world);
  model::PretrainConfig pc;
  if (epochs) pc.epochs = *epochs;
  pc.seed = seed;
  harness::SourceModel src = harness::pretrain_source(world, pc, seed);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  model::save_checkpoint(out, src.extractor, src.head ? &*src.head : nullptr);

  // Clean source-domain retrieval as a quick health check.
  const auto& dom = world.domains[0];
  auto gallery = core::build_gallery(src.extractor, dom.gallery.all(), dom.gallery.labels);
  auto pred = core::predict(model::extract_features(src.extractor, dom.query.all()), gallery);
  std::printf("wrote %s  source-domain cmc %.4f\n", out.c_str(),
              harness::cmc_top1(pred.top1, gallery.labels(), dom.query.labels));
  return 0;
}

int cmd_adapt(const harness::RunConfig& c) {
  auto records = harness::run_experiment(c);
  print_summary(harness::to_string(c.method), records);
  std::printf("wrote %s\n", (fs::path(c.out_dir) / "metrics.csv").string().c_str());
  return 0;
}

int cmd_sweep(const harness::RunConfig& c, const std::string& axis_name, std::vector<std::string> values,
              const std::vector<std::string>& method_names) {
  const harness::SweepAxis axis = harness::parse_axis(axis_name);
  if (values.empty()) values = harness::default_axis_values(axis);
  std::vector<harness::MethodKind> methods;
  for (const auto& m : method_names) methods.push_back(harness::parse_method(m));
  if (methods.empty()) methods.push_back(c.method);

  scenario::ScenarioConfig sc = scenario::load_scenario(c.scenario_path);
  scenario::SyntheticWorld world = scenario::generate_world(sc.world);
  harness::SourceModel src = source_for(c, world);
  auto rows = harness::sweep(axis, values, methods, c.options, sc, world, src, c.seeds, c.gallery_from_source);
  fs::create_directories(c.out_dir);
  const std::string path = (fs::path(c.out_dir) / ("sweep_" + harness::to_string(axis) + ".csv")).string();
  harness::write_sweep_csv(path, rows);
  for (const auto& r : rows) {
    if (r.phase) continue;
    if (!r.error.empty()) {
      std::printf("%-10s %s=%-6s seed %llu  - (%s)\n", r.method.c_str(), r.axis.c_str(), r.value.c_str(),
                  static_cast<unsigned long long>(r.seed), r.error.c_str());
    } else {
      std::printf("%-10s %s=%-6s seed %llu  cmc %.4f  drift %.4f\n", r.method.c_str(), r.axis.c_str(),
                  r.value.c_str(), static_cast<unsigned long long>(r.seed), *r.cmc_top1, *r.final_param_drift_l2);
    }
  }
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

// Gallery and query features of every phase of the scenario stream for the
// first seed, extracted with the run's checkpoint.
int cmd_dump_features(const harness::RunConfig& c, const std::string& out) {
  scenario::ScenarioConfig sc = scenario::load_scenario(c.scenario_path);
  scenario::SyntheticWorld world = scenario::generate_world(sc.world);
  harness::SourceModel src = harness::load_source(c.checkpoint_path);
  scenario::ScenarioStream stream = scenario::make_stream(
      sc, world, c.options.temp.batch_size, harness::stream_seed_for(sc.stream_seed, c.seeds.front()));
  std::vector<harness::FeatureSet> sets;
  const model::LabeledSamples* gallery = nullptr;
  for (const scenario::Phase& p : stream.phases) {
    if (p.gallery) gallery = &*p.gallery;
    sets.push_back({gallery->all(), gallery->labels, "gallery", p.index});
    for (const scenario::QueryBatch& b : p.batches) sets.push_back({b.inputs, b.labels, "query", p.index});
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  harness::dump_features(src.extractor, sets, out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_gradcheck(double tolerance, bool verbose) {
  reference::GradientSuiteResult r = reference::run_gradient_suite();
  for (const auto& c : r.cases) {
    if (verbose || c.report.max_rel_error > tolerance) {
      std::printf("%-32s max rel error %.3e over %zu coordinates\n", c.name.c_str(), c.report.max_rel_error,
                  c.report.coordinates);
    }
  }
  const bool ok = r.max_rel_error <= tolerance;
  std::printf("%zu cases, max rel error %.3e, %.2f s: %s\n", r.cases.size(), r.max_rel_error, r.seconds,
              ok ? "ok" : "FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time adaptation for re-identification on synthetic streams"};
  app.require_subcommand(1);

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain a source model on a scenario's training split");
  std::string p_scenario, p_out = "source.ckpt";
  std::optional<std::size_t> p_epochs;
  std::uint64_t p_seed = 0;
  pretrain->add_option("--scenario,--config", p_scenario, "Scenario JSON")->required();
  pretrain->add_option("--out", p_out, "Checkpoint path");
  pretrain->add_option("--epochs", p_epochs, "Training epochs");
  pretrain->add_option("--seed", p_seed, "Model and sampling seed");

  auto* adapt = app.add_subcommand("adapt", "Run one method over a scenario for each seed");
  std::string a_config;
  Overrides a_over;
  adapt->add_option("--config", a_config, "Run config JSON");
  a_over.add_to(*adapt);

  auto* sweep = app.add_subcommand("sweep", "Vary one setting over its values");
  std::string s_config, s_axis;
  std::vector<std::string> s_values, s_methods;
  Overrides s_over;
  sweep->add_option("--config", s_config, "Run config JSON");
  sweep->add_option("--axis", s_axis, "k, batch_size, lambda or selection")->required();
  sweep->add_option("--values", s_values, "Axis values (default: the standard grid)")->expected(1, -1);
  sweep->add_option("--methods", s_methods, "Methods to sweep (default: the config's method)")->expected(1, -1);
  s_over.add_to(*sweep);

  auto* dump = app.add_subcommand("dump-features", "Write query and gallery features of a scenario stream");
  std::string d_config, d_out = "features.csv";
  Overrides d_over;
  dump->add_option("--config", d_config, "Run config JSON");
  dump->add_option("--features-out", d_out, "Feature CSV path");
  d_over.add_to(*dump);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  double g_tol = 1e-3;
  bool g_verbose = false;
  grad->add_option("--tolerance", g_tol, "Maximum relative error");
  grad->add_flag("-v,--verbose", g_verbose, "Print every case");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pretrain) return cmd_pretrain(p_scenario, p_out, p_epochs, p_seed);
    if (*adapt) return cmd_adapt(a_over.apply(a_config));
    if (*sweep) return cmd_sweep(s_over.apply(s_config), s_axis, s_values, s_methods);
    if (*dump) return cmd_dump_features(d_over.apply(d_config), d_out);
    if (*grad) return cmd_gradcheck(g_tol, g_verbose);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
