#include "gfoes/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "gfoes/error.hpp"
#include "gfoes/rng.hpp"
#include "json_io.hpp"

namespace gfoes {

namespace fs = std::filesystem;

// ----------------------------------------------------------------------------
// Config

void AblationCell::validate() const {
  if (name.empty()) throw ConfigError("ablation cell: name is required");
  if (!(eta_high > 0.0) || !(eta_low > 0.0)) {
    throw ConfigError("ablation cell '" + name + "': schedule rates must be positive");
  }
}

std::vector<AblationCell> default_ablation_cells() {
  struct Schedule {
    const char* tag;
    double high, low;
  };
  const Schedule schedules[] = {{"R_ls", 4e-3, 4e-4}, {"R_l", 4e-3, 4e-3}, {"R_s", 4e-4, 4e-4}};
  const std::pair<const char*, ErasureData> data[] = {{"OES+D_r", ErasureData::OesAndRetained},
                                                      {"OES", ErasureData::OesOnly},
                                                      {"D_r", ErasureData::RetainedOnly}};
  std::vector<AblationCell> cells;
  for (const auto& [prefix, d] : data)
    for (const auto& s : schedules)
      cells.push_back({std::string(prefix) + "+" + s.tag, d, s.high, s.low});
  return cells;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.data.num_classes = 5;
  c.data.dim = 16;
  c.data.per_class = 625;
  c.data.noise_sigma = 10.0;
  c.data.separation = 80.0;
  c.split.forgotten = {0};
  c.split.retained_fraction = 0.10;
  c.split.test_fraction = 0.20;
  c.original = original_protocol(0);
  return c;
}

void ExperimentConfig::validate() const {
  if (!(rate_scale > 0.0)) throw ConfigError("rate_scale must be positive");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (m != "gfoes") parse_method(m);
    if (!seen.insert(m).second) throw ConfigError("methods: '" + m + "' listed twice");
  }
  if (data.num_classes != model.num_classes) {
    throw ConfigError("model.num_classes must equal data.num_classes");
  }
  if (data.dim != model.input_dim) throw ConfigError("model.input_dim must equal data.dim");
  if (data.num_classes < 2 || data.dim < 2 || data.per_class == 0) {
    throw ConfigError("data: need >= 2 classes, dim >= 2 and a positive per_class");
  }
  if (!(data.separation > 0.0) || !(data.noise_sigma > 0.0)) {
    throw ConfigError("data: separation and noise_sigma must be positive");
  }
  if (split.forgotten.empty()) throw ConfigError("split.forgotten must not be empty");
  for (int y : split.forgotten) {
    if (y < 0 || static_cast<std::size_t>(y) >= data.num_classes) {
      throw ConfigError("split.forgotten: label " + std::to_string(y) + " out of range");
    }
  }
  if (!(split.retained_fraction > 0.0 && split.retained_fraction <= 1.0)) {
    throw ConfigError("split.retained_fraction must lie in (0, 1]");
  }
  if (!(split.test_fraction > 0.0 && split.test_fraction < 1.0)) {
    throw ConfigError("split.test_fraction must lie in (0, 1)");
  }
  model_spec().validate();
  original.validate();
  gfn.validate();
  unlearn.validate();
  baselines.validate();
  std::set<std::string> names;
  for (const auto& c : ablation) {
    c.validate();
    if (!names.insert(c.name).second) throw ConfigError("ablation: duplicate cell '" + c.name + "'");
  }
}

BlobSpec ExperimentConfig::data_spec() const {
  BlobSpec s = data;
  s.seed = derive_seed(seed, "data");
  return s;
}

SplitSpec ExperimentConfig::split_spec() const {
  SplitSpec s = split;
  s.seed = derive_seed(seed, "split");
  return s;
}

ModelSpec ExperimentConfig::model_spec() const {
  ModelSpec s = model;
  s.seed = derive_seed(seed, "original", "init");
  return s;
}

TrainConfig ExperimentConfig::original_training() const {
  TrainConfig t = original;
  t.seed = derive_seed(seed, "original", "fit");
  return t;
}

GfnConfig ExperimentConfig::gfn_config() const {
  GfnConfig g = gfn;
  g.eta_phi *= rate_scale;
  g.seed = derive_seed(seed, "gfoes", "gfn");
  return g;
}

UnlearnConfig ExperimentConfig::unlearn_config() const {
  UnlearnConfig u = unlearn;
  u.eta_high *= rate_scale;
  u.eta_low *= rate_scale;
  u.seed = derive_seed(seed, "gfoes", "unlearn");
  return u;
}

UnlearnConfig ExperimentConfig::cell_config(const AblationCell& cell) const {
  UnlearnConfig u = unlearn_config();
  u.erasure_data = cell.data;
  u.eta_high = cell.eta_high * rate_scale;
  u.eta_low = cell.eta_low * rate_scale;
  return u;
}

BaselineConfig ExperimentConfig::baseline_config(BaselineMethod method) const {
  BaselineConfig b = baselines;
  b.method = method;
  b.learning_rate *= rate_scale;
  b.repair_learning_rate *= rate_scale;
  b.seed = derive_seed(seed, method_name(method));
  return b;
}

namespace {

// Reads one mapping node, remembering which keys were consumed so that
// misspelled keys are reported instead of silently ignored.
class Section {
 public:
  Section(YAML::Node node, std::string path, const std::string& origin)
      : node_(std::move(node)), path_(std::move(path)), origin_(origin) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail(node_, "expected a mapping");
  }

  bool has(const char* key) const { return node_ && node_.IsMap() && node_[key]; }

  template <class T>
  void get(const char* key, T& out) {
    if (!has(key)) return;
    used_.insert(key);
    const YAML::Node v = node_[key];
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      fail(v, "bad value for '" + field(key) + "'");
    }
  }

  void get_clip(const char* key, std::optional<double>& out) {
    if (!has(key)) return;
    used_.insert(key);
    const YAML::Node v = node_[key];
    if (v.IsNull() || (v.IsScalar() && v.Scalar() == "none")) {
      out.reset();
      return;
    }
    try {
      out = v.as<double>();
    } catch (const YAML::Exception&) {
      fail(v, "bad value for '" + field(key) + "' (a number or none)");
    }
  }

  template <class F>
  void get_with(const char* key, F&& parse) {
    if (!has(key)) return;
    used_.insert(key);
    const YAML::Node v = node_[key];
    try {
      parse(v.as<std::string>());
    } catch (const ConfigError& e) {
      fail(v, field(key) + ": " + e.what());
    } catch (const YAML::Exception&) {
      fail(v, "bad value for '" + field(key) + "'");
    }
  }

  Section child(const char* key) {
    if (has(key)) used_.insert(key);
    return Section(has(key) ? node_[key] : YAML::Node(), field(key), origin_);
  }

  YAML::Node raw(const char* key) {
    if (has(key)) used_.insert(key);
    return has(key) ? node_[key] : YAML::Node();
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.contains(key)) fail(kv.first, "unknown field '" + field(key) + "'");
    }
  }

  [[noreturn]] void fail(const YAML::Node& at, const std::string& what) const {
    const auto mark = at.Mark();
    std::string where = origin_;
    if (!mark.is_null()) where += ":" + std::to_string(mark.line + 1);
    throw ConfigError(where + ": " + what);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  YAML::Node node_;
  std::string path_;
  const std::string& origin_;
  std::set<std::string> used_;
};

void read_step(Section& s, OptimStep& step) {
  s.get("learning_rate", step.learning_rate);
  s.get("weight_decay", step.weight_decay);
  s.get_clip("clip", step.clip_norm);
  s.get_with("clip_mode", [&](const std::string& v) { step.clip_mode = parse_clip_mode(v); });
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  ExperimentConfig c = default_config();
  if (!root || root.IsNull()) return c;
  Section top(root, "", origin);
  top.get("seed", c.seed);
  std::string out_dir;
  top.get("output_dir", out_dir);
  if (!out_dir.empty()) c.output_dir = out_dir;
  top.get("rate_scale", c.rate_scale);
  top.get("methods", c.methods);

  Section data = top.child("data");
  data.get("num_classes", c.data.num_classes);
  data.get("dim", c.data.dim);
  data.get("per_class", c.data.per_class);
  data.get("separation", c.data.separation);
  data.get("noise_sigma", c.data.noise_sigma);
  data.finish();
  c.model.num_classes = c.data.num_classes;
  c.model.input_dim = c.data.dim;

  Section split = top.child("split");
  split.get("forgotten", c.split.forgotten);
  split.get("retained_fraction", c.split.retained_fraction);
  split.get("test_fraction", c.split.test_fraction);
  split.finish();

  Section model = top.child("model");
  model.get("hidden", c.model.hidden);
  model.get("z_dim", c.model.z_dim);
  model.get("generator_hidden", c.model.generator_hidden);
  model.get("init", c.model.init);
  model.finish();

  Section original = top.child("original");
  read_step(original, c.original.step);
  original.get("epochs", c.original.epochs);
  original.get("batch_size", c.original.batch_size);
  original.finish();

  Section gfn = top.child("gfn");
  gfn.get("eta_gfn", c.gfn.eta_gfn);
  gfn.get("eta_phi", c.gfn.eta_phi);
  gfn.get("eta_lambda", c.gfn.eta_lambda);
  gfn.get("lambda0", c.gfn.lambda0);
  gfn.get("epochs", c.gfn.epochs);
  gfn.get("iterations_per_epoch", c.gfn.iterations_per_epoch);
  gfn.get("batch_size", c.gfn.batch_size);
  gfn.get("delta", c.gfn.delta);
  gfn.get("eps_guard", c.gfn.eps_guard);
  gfn.get("weight_decay", c.gfn.weight_decay);
  gfn.get_clip("clip", c.gfn.clip_norm);
  gfn.get_with("clip_mode", [&](const std::string& v) { c.gfn.clip_mode = parse_clip_mode(v); });
  gfn.get("first_order", c.gfn.first_order);
  gfn.finish();

  Section un = top.child("unlearn");
  un.get("eta_high", c.unlearn.eta_high);
  un.get("eta_low", c.unlearn.eta_low);
  un.get("erasure_epochs", c.unlearn.erasure_epochs);
  un.get("recovery_epochs", c.unlearn.recovery_epochs);
  un.get("batch_size", c.unlearn.batch_size);
  un.get("weight_decay", c.unlearn.weight_decay);
  un.get_clip("clip", c.unlearn.clip_norm);
  un.get_with("clip_mode", [&](const std::string& v) { c.unlearn.clip_mode = parse_clip_mode(v); });
  un.get("oes_count", c.unlearn.oes_count);
  un.get_with("erasure_data",
              [&](const std::string& v) { c.unlearn.erasure_data = parse_erasure_data(v); });
  un.finish();

  Section base = top.child("baselines");
  base.get("learning_rate", c.baselines.learning_rate);
  base.get("epochs", c.baselines.epochs);
  base.get("batch_size", c.baselines.batch_size);
  base.get("weight_decay", c.baselines.weight_decay);
  base.get_clip("clip", c.baselines.clip_norm);
  base.get_with("clip_mode",
                [&](const std::string& v) { c.baselines.clip_mode = parse_clip_mode(v); });
  base.get("proxy_per_class", c.baselines.proxy_per_class);
  base.get("noise_steps", c.baselines.noise_steps);
  base.get("noise_rate", c.baselines.noise_rate);
  base.get("repair_learning_rate", c.baselines.repair_learning_rate);
  base.get("repair_epochs", c.baselines.repair_epochs);
  base.finish();

  const YAML::Node cells = top.raw("ablation");
  if (cells && !cells.IsNull()) {
    if (!cells.IsSequence()) top.fail(cells, "ablation: expected a list of cells");
    c.ablation.clear();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      Section cell(cells[i], "ablation[" + std::to_string(i) + "]", origin);
      AblationCell a;
      cell.get("name", a.name);
      cell.get_with("data", [&](const std::string& v) { a.data = parse_erasure_data(v); });
      cell.get("eta_high", a.eta_high);
      cell.get("eta_low", a.eta_low);
      cell.finish();
      c.ablation.push_back(a);
    }
  }
  top.finish();

  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

namespace {

ordered_json clip_json(const std::optional<double>& clip) {
  return clip ? ordered_json(*clip) : ordered_json(nullptr);
}

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["rate_scale"] = c.rate_scale;
  j["methods"] = c.methods;
  j["data"] = {{"num_classes", c.data.num_classes},
               {"dim", c.data.dim},
               {"per_class", c.data.per_class},
               {"separation", c.data.separation},
               {"noise_sigma", c.data.noise_sigma}};
  j["split"] = {{"forgotten", c.split.forgotten},
                {"retained_fraction", c.split.retained_fraction},
                {"test_fraction", c.split.test_fraction}};
  j["model"] = {{"hidden", c.model.hidden},
                {"z_dim", c.model.z_dim},
                {"generator_hidden", c.model.generator_hidden},
                {"init", c.model.init}};
  const OptimStep& o = c.original.step;
  j["original"] = {{"learning_rate", o.learning_rate},
                   {"weight_decay", o.weight_decay},
                   {"clip", clip_json(o.clip_norm)},
                   {"clip_mode", clip_mode_name(o.clip_mode)},
                   {"epochs", c.original.epochs},
                   {"batch_size", c.original.batch_size}};
  const GfnConfig& g = c.gfn;
  j["gfn"] = {{"eta_gfn", g.eta_gfn},
              {"eta_phi", g.eta_phi},
              {"eta_lambda", g.eta_lambda},
              {"lambda0", g.lambda0},
              {"epochs", g.epochs},
              {"iterations_per_epoch", g.iterations_per_epoch},
              {"batch_size", g.batch_size},
              {"delta", g.delta},
              {"eps_guard", g.eps_guard},
              {"weight_decay", g.weight_decay},
              {"clip", clip_json(g.clip_norm)},
              {"clip_mode", clip_mode_name(g.clip_mode)},
              {"first_order", g.first_order}};
  const UnlearnConfig& u = c.unlearn;
  j["unlearn"] = {{"eta_high", u.eta_high},
                  {"eta_low", u.eta_low},
                  {"erasure_epochs", u.erasure_epochs},
                  {"recovery_epochs", u.recovery_epochs},
                  {"batch_size", u.batch_size},
                  {"weight_decay", u.weight_decay},
                  {"clip", clip_json(u.clip_norm)},
                  {"clip_mode", clip_mode_name(u.clip_mode)},
                  {"oes_count", u.oes_count},
                  {"erasure_data", erasure_data_name(u.erasure_data)}};
  const BaselineConfig& b = c.baselines;
  j["baselines"] = {{"learning_rate", b.learning_rate},
                    {"epochs", b.epochs},
                    {"batch_size", b.batch_size},
                    {"weight_decay", b.weight_decay},
                    {"clip", clip_json(b.clip_norm)},
                    {"clip_mode", clip_mode_name(b.clip_mode)},
                    {"proxy_per_class", b.proxy_per_class},
                    {"noise_steps", b.noise_steps},
                    {"noise_rate", b.noise_rate},
                    {"repair_learning_rate", b.repair_learning_rate},
                    {"repair_epochs", b.repair_epochs}};
  ordered_json cells = ordered_json::array();
  for (const auto& a : c.ablation) {
    cells.push_back({{"name", a.name},
                     {"data", erasure_data_name(a.data)},
                     {"eta_high", a.eta_high},
                     {"eta_low", a.eta_low}});
  }
  j["ablation"] = cells;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

}  // namespace

std::string config_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

// ----------------------------------------------------------------------------
// Runs

Task prepare_task(const ExperimentConfig& cfg) {
  cfg.validate();
  Task t;
  t.data = make_blobs(cfg.data_spec());
  t.split = split_forget(t.data, cfg.split_spec());
  t.theta0 = init_model(cfg.model_spec());
  t.train_losses = fit(t.theta0, concat(t.split.forget, t.split.retain), cfg.original_training());
  return t;
}

const MethodOutcome* RunResult::find(std::string_view method) const {
  for (const auto& m : methods)
    if (m.method == method) return &m;
  return nullptr;
}

namespace {

ordered_json summary_json(const MetricsReport& m) {
  ordered_json j;
  j["ad_f"] = m.logits.ad_f;
  j["ad_r"] = m.logits.ad_r;
  if (m.distances) {
    j["weight_distance"] = {{"feature_extractor", m.distances->feature_extractor},
                            {"head", m.distances->head},
                            {"all", m.distances->all}};
  }
  ordered_json disp = ordered_json::object();
  for (const auto& c : m.representation.classes) {
    disp[std::to_string(c.label)] =
        c.dispersion_ratio ? ordered_json(*c.dispersion_ratio) : ordered_json(nullptr);
  }
  j["dispersion_ratio"] = disp;
  return j;
}

ordered_json convergence_json(const GfnTrace& trace) {
  const ConvergenceReport r = convergence_report(trace);
  return {{"iterations", trace.records.size()},
          {"lambda_final", trace.records.back().lambda},
          {"initial_gap", r.initial_gap},
          {"final_gap", r.final_gap},
          {"running_min_initial", r.running_min.front()},
          {"running_min_final", r.running_min.back()},
          {"running_min_non_increasing", r.running_min_non_increasing},
          {"lower_bound_holds", r.lower_bound_holds},
          {"positivity_holds", r.positivity_holds},
          {"lambda_in_range", r.lambda_in_range}};
}

void write_method(const MethodOutcome& m, const fs::path& dir) {
  make_dir(dir);
  save_model(m.model, dir / "model.bin");
  write_metrics_json(m.metrics, dir / "metrics.json");
  write_features_csv(m.metrics.representation, dir / "features.csv");
  if (m.gfoes) {
    write_trace_csv(m.gfoes->trace, dir / "gfn_trace.csv");
    write_record_json(m.gfoes->record, dir / "record.json");
    if (m.gfoes->generator) save_model(*m.gfoes->generator, dir / "generator.bin");
  }
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_meta(const fs::path& dir, const std::string& command, const std::string& started,
                double seconds) {
  char host[256] = {0};
  gethostname(host, sizeof host - 1);
  ordered_json j;
  j["command"] = command;
  j["started"] = started;
  j["finished"] = now_iso();
  j["wall_seconds"] = seconds;
  j["host"] = host;
  j["gfoes_version"] = "0.1.0";
  write_text(dir / "meta.json", j.dump(2) + "\n");
}

ZeroGlanceReport zero_glance(const AccessLog& log, const DatasetSplit& split) {
  ZeroGlanceReport r;
  const auto train_forget = row_hashes(split.forget);
  const auto test_forget = row_hashes(split.test_forget);
  r.forbidden_rows = split.forget.size() + split.test_forget.size();
  const std::vector<std::string> eval_only = {"evaluate"};
  r.violations = log.violations(train_forget) + log.violations(test_forget, eval_only);
  std::set<std::string> names;
  for (const auto& rec : log.records()) names.insert(rec.consumer);
  r.consumers.assign(names.begin(), names.end());
  return r;
}

ordered_json zero_glance_json(const ZeroGlanceReport& z) {
  return {{"forbidden_rows", z.forbidden_rows},
          {"violations", z.violations},
          {"consumers", z.consumers}};
}

}  // namespace

void write_task(const ExperimentConfig& cfg, const Task& task, const fs::path& out) {
  make_dir(out);
  write_text(out / "config.json", config_json(cfg) + "\n");
  write_csv(task.data, out / "data.csv");
  write_manifest(task.split, cfg.split_spec(), out / "split.json");
  save_model(task.theta0, out / "theta0.bin");
  const MetricsReport original = evaluate(task.theta0, task.split, nullptr);
  make_dir(out / "original");
  write_metrics_json(original, out / "original" / "metrics.json");
  write_features_csv(original.representation, out / "original" / "features.csv");
}

SavedRun load_run(const fs::path& dir) {
  SavedRun r;
  r.config = parse_config(read_text(dir / "config.json"), (dir / "config.json").string());
  r.task.data = read_csv(dir / "data.csv", r.config.data.num_classes);
  r.task.split = read_manifest(r.task.data, dir / "split.json");
  r.task.theta0 = load_classifier(dir / "theta0.bin");
  return r;
}

RunResult run_experiment(const ExperimentConfig& cfg, const std::optional<fs::path>& out) {
  const std::string started = now_iso();
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r;
  r.task = prepare_task(cfg);
  if (out) write_task(cfg, r.task, *out);
  const Task& task = r.task;

  AccessLog log;
  {
    ScopedAccessLog scope(log);
    r.original = evaluate(task.theta0, task.split, nullptr);
    for (const auto& name : cfg.methods) {
      MethodOutcome m;
      m.method = name;
      try {
        if (name == "gfoes") {
          UnlearnResult u = gfoes_unlearn(task.theta0, task.split.retain_subset,
                                          task.split.forgotten, cfg.gfn_config(),
                                          cfg.unlearn_config());
          m.model = u.theta_star;
          m.gfoes = std::move(u);
        } else {
          const BaselineMethod method = parse_method(name);
          m.model = run_baseline(task.theta0, task.split.retain_subset, task.split.forgotten,
                                 cfg.baseline_config(method));
        }
      } catch (const NumericError& e) {
        if (out) {
          ordered_json j;
          j["method"] = name;
          j["error"] = e.what();
          if (const auto* g = dynamic_cast<const GfnAborted*>(&e)) {
            j["iteration"] = g->iteration();
            make_dir(*out / name);
            write_trace_csv(g->trace(), *out / name / "gfn_trace.csv");
          }
          write_text(*out / "aborted.json", j.dump(2) + "\n");
        }
        throw;
      }
      m.metrics = evaluate(m.model, task.split, &task.theta0);
      r.methods.push_back(std::move(m));
    }
  }
  r.audit = zero_glance(log, task.split);

  if (out) {
    ordered_json run;
    run["command"] = "run";
    run["config"] = to_json(cfg);
    run["original"] = summary_json(r.original);
    ordered_json methods = ordered_json::object();
    for (const auto& m : r.methods) {
      write_method(m, *out / m.method);
      ordered_json s = summary_json(m.metrics);
      if (m.gfoes && !m.gfoes->trace.records.empty()) s["gfn"] = convergence_json(m.gfoes->trace);
      methods[m.method] = s;
    }
    run["methods"] = methods;
    run["zero_glance"] = zero_glance_json(r.audit);
    write_text(*out / "run.json", run.dump(2) + "\n");
    write_meta(*out, "run", started,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return r;
}

std::vector<CellOutcome> run_ablation(const ExperimentConfig& cfg, const Task& task,
                                      const std::optional<fs::path>& out) {
  const std::string started = now_iso();
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  const auto& split = task.split;
  // Every OES cell shares one generator: its training does not depend on the cell.
  std::optional<GfnResult> gfn;
  std::vector<CellOutcome> results;
  for (const auto& cell : cfg.ablation) {
    const UnlearnConfig uc = cfg.cell_config(cell);
    if (cell.data != ErasureData::RetainedOnly && !gfn) {
      gfn = train_gfn(task.theta0, split.retain_subset, split.forgotten, cfg.gfn_config());
    }
    ErasureResult erased =
        cell.data == ErasureData::RetainedOnly
            ? erasure_phase(task.theta0, LabeledDataset{}, split.retain_subset, split.forgotten, uc)
            : erasure_phase(task.theta0, gfn->generator, split.retain_subset, split.forgotten, uc);
    const RecoveryResult rec = recovery_phase(erased.theta1, split.retain_subset, split.forgotten, uc);
    results.push_back({cell, forget_retain_report(rec.theta_star, split.test_forget,
                                                  split.test_retain, split.forgotten)});
  }

  if (out) {
    make_dir(*out);
    std::string csv = "cell,AD_f,AD_r\n";
    char buf[160];
    for (const auto& r : results) {
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.result.ad_f, r.result.ad_r);
      csv += r.cell.name + buf;
    }
    write_text(*out / "ablation.csv", csv);
    ordered_json run;
    run["command"] = "ablate";
    run["config"] = to_json(cfg);
    const ForgetRetain base = forget_retain_report(task.theta0, split.test_forget,
                                                   split.test_retain, split.forgotten);
    run["original"] = {{"ad_f", base.ad_f}, {"ad_r", base.ad_r}};
    ordered_json cells = ordered_json::array();
    for (const auto& r : results) {
      cells.push_back({{"cell", r.cell.name},
                       {"data", erasure_data_name(r.cell.data)},
                       {"eta_high", r.cell.eta_high * cfg.rate_scale},
                       {"eta_low", r.cell.eta_low * cfg.rate_scale},
                       {"ad_f", r.result.ad_f},
                       {"ad_r", r.result.ad_r}});
    }
    run["cells"] = cells;
    write_text(*out / "run.json", run.dump(2) + "\n");
    write_meta(*out, "ablate", started,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return results;
}

// ----------------------------------------------------------------------------
// Audit

std::vector<std::string> audit_run(const fs::path& dir) {
  std::vector<std::string> problems;
  ordered_json run;
  try {
    run = ordered_json::parse(read_text(dir / "run.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "run.json").string() + ": " + e.what());
  }
  const SavedRun saved = load_run(dir);
  const Task& task = saved.task;

  auto compare = [&](const std::string& where, const ordered_json& recorded,
                     const ordered_json& recomputed) {
    if (recorded != recomputed) {
      problems.push_back(where + ": recorded " + recorded.dump() + ", recomputed " +
                         recomputed.dump());
    }
  };

  const ordered_json config = to_json(saved.config);
  compare("config", run.at("config"), config);

  if (run.value("command", "") == "ablate") {
    const ForgetRetain base = forget_retain_report(task.theta0, task.split.test_forget,
                                                   task.split.test_retain, task.split.forgotten);
    compare("original.ad_f", run["original"]["ad_f"], base.ad_f);
    compare("original.ad_r", run["original"]["ad_r"], base.ad_r);
    return problems;
  }

  compare("original", run.at("original"), summary_json(evaluate(task.theta0, task.split, nullptr)));
  for (const auto& [name, recorded] : run.at("methods").items()) {
    const fs::path model_path = dir / name / "model.bin";
    if (!fs::exists(model_path)) {
      problems.push_back(name + ": missing " + model_path.string());
      continue;
    }
    const ClassifierModel model = load_classifier(model_path);
    const MetricsReport m = evaluate(model, task.split, &task.theta0);
    ordered_json recomputed = summary_json(m);
    if (recorded.contains("gfn")) {
      const fs::path trace = dir / name / "gfn_trace.csv";
      if (!fs::exists(trace)) problems.push_back(name + ": missing " + trace.string());
      recomputed["gfn"] = recorded["gfn"];
    }
    compare(name, recorded, recomputed);
    const std::string metrics_file = read_text(dir / name / "metrics.json");
    if (metrics_file != metrics_json(m) + "\n") problems.push_back(name + ": metrics.json differs");
  }
  return problems;
}

}  // namespace gfoes
