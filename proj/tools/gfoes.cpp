// gfoes: command-line runner for the unlearning experiments.
//
// Exit codes: 0 success, 1 config or usage error, 2 numeric abort,
// 3 audit mismatch, 4 I/O or other failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gfoes/error.hpp"
#include "gfoes/experiment.hpp"

namespace fs = std::filesystem;
using namespace gfoes;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> methods;
  std::string model;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? default_config() : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (!o.methods.empty()) cfg.methods = o.methods;
  cfg.validate();
  return cfg;
}

void print_metrics(const char* name, const MetricsReport& m) {
  std::printf("%-20s AD_f %.4f  AD_r %.4f", name, m.logits.ad_f, m.logits.ad_r);
  if (m.distances) {
    std::printf("  |dθ| features %.4f head %.4f", m.distances->feature_extractor, m.distances->head);
  }
  std::printf("\n");
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const Task task = prepare_task(cfg);
  write_task(cfg, task, cfg.output_dir);
  print_metrics("original", evaluate(task.theta0, task.split, nullptr));
  std::printf("wrote %s\n", cfg.output_dir.string().c_str());
  return 0;
}

int cmd_run(Options o, bool baselines_only) {
  ExperimentConfig cfg = resolve(o);
  if (baselines_only && o.methods.empty()) {
    std::erase(cfg.methods, std::string("gfoes"));
    if (cfg.methods.empty()) throw ConfigError("no baseline methods enabled");
  }
  const RunResult r = run_experiment(cfg, cfg.output_dir);
  print_metrics("original", r.original);
  for (const auto& m : r.methods) print_metrics(m.method.c_str(), m.metrics);
  std::printf("zero-glance: %zu forbidden rows, %zu violations\n", r.audit.forbidden_rows,
              r.audit.violations);
  std::printf("wrote %s\n", cfg.output_dir.string().c_str());
  return 0;
}

int cmd_ablate(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const Task task = prepare_task(cfg);
  write_task(cfg, task, cfg.output_dir);
  for (const auto& c : run_ablation(cfg, task, cfg.output_dir)) {
    std::printf("%-14s AD_f %.4f  AD_r %.4f\n", c.cell.name.c_str(), c.result.ad_f, c.result.ad_r);
  }
  std::printf("wrote %s\n", (cfg.output_dir / "ablation.csv").string().c_str());
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.out.empty()) throw ConfigError("eval needs --out pointing at a run directory");
  const SavedRun run = load_run(o.out);
  std::vector<fs::path> models;
  if (!o.model.empty()) {
    models.push_back(o.model);
  } else {
    models.push_back(fs::path(o.out) / "theta0.bin");
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(o.out)) {
      if (entry.is_directory() && fs::exists(entry.path() / "model.bin")) {
        found.push_back(entry.path() / "model.bin");
      }
    }
    std::sort(found.begin(), found.end());
    models.insert(models.end(), found.begin(), found.end());
  }
  nlohmann::ordered_json all = nlohmann::ordered_json::object();
  for (const auto& path : models) {
    const ClassifierModel model = load_classifier(path);
    const bool is_original = path.filename() == "theta0.bin";
    const MetricsReport m = evaluate(model, run.task.split, is_original ? nullptr : &run.task.theta0);
    const std::string name = is_original ? "original" : path.parent_path().filename().string();
    all[name] = nlohmann::ordered_json::parse(metrics_json(m));
  }
  std::cout << all.dump(2) << '\n';
  return 0;
}

int cmd_audit(const Options& o) {
  if (o.out.empty()) throw ConfigError("audit needs --out pointing at a run directory");
  const auto problems = audit_run(o.out);
  for (const auto& p : problems) std::printf("MISMATCH %s\n", p.c_str());
  if (!problems.empty()) return 3;
  std::printf("audit ok: every recorded metric re-derived from %s\n", o.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative feedback unlearning lab"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool with_methods) {
    sub->add_option("--config", o.config, "Config file (YAML or JSON); defaults to the built-in blob task");
    sub->add_option("--seed", o.seed, "Override the master seed");
    sub->add_option("--out", o.out, "Output directory (overrides output_dir)");
    if (with_methods) {
      sub->add_option("--methods", o.methods, "Methods to run: gfoes, retrain, neggrad, random_label, noise_impair_repair")
          ->delimiter(',');
    }
  };

  CLI::App* train = app.add_subcommand("train", "Generate the task and train the original model");
  add_common(train, false);
  CLI::App* unlearn = app.add_subcommand("unlearn", "Train theta0, run GFOES and the enabled baselines");
  add_common(unlearn, true);
  CLI::App* baseline = app.add_subcommand("baseline", "Train theta0 and run the baselines only");
  add_common(baseline, true);
  CLI::App* ablate = app.add_subcommand("ablate", "Run the ablation grid against one shared theta0");
  add_common(ablate, false);
  CLI::App* eval = app.add_subcommand("eval", "Print metrics JSON for the models of a run directory");
  add_common(eval, false);
  eval->add_option("--model", o.model, "Evaluate this model file only");
  CLI::App* audit = app.add_subcommand("audit", "Re-derive run.json from the persisted models and data");
  add_common(audit, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(o);
    if (*unlearn) return cmd_run(o, false);
    if (*baseline) return cmd_run(o, true);
    if (*ablate) return cmd_ablate(o);
    if (*eval) return cmd_eval(o);
    if (*audit) return cmd_audit(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 1;
}
