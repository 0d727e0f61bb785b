#include "gfoes/models.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "gfoes/error.hpp"
#include "gfoes/rng.hpp"
#include "json_io.hpp"

namespace gfoes {

namespace {

constexpr int kFormatVersion = 1;

std::string layer_name(std::string_view prefix, std::size_t i, std::string_view what) {
  return std::string(prefix) + "." + std::to_string(i) + "." + std::string(what);
}

void add_glorot_layer(ParameterVector& params, Rng& rng, const std::string& weight_name,
                      const std::string& bias_name, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor w = Tensor::zeros(fan_in, fan_out);
  for (double& v : w.values()) v = dist(rng);
  params.add(weight_name, std::move(w));
  params.add(bias_name, Tensor::zeros(1, fan_out));
}

void require_width(const Tensor& batch, std::size_t width, const char* what) {
  require_matrix(batch, what);
  if (batch.cols() != width) {
    throw ShapeError(std::string(what) + ": batch width " + std::to_string(batch.cols()) +
                     " != expected " + std::to_string(width));
  }
}

std::pair<Tensor, Tensor> output_range(const ModelSpec& spec) {
  Tensor center = Tensor::zeros(1, spec.input_dim);
  Tensor half = Tensor::filled(1, spec.input_dim, 1.0);
  if (!spec.data_lower.empty()) {
    for (std::size_t j = 0; j < spec.input_dim; ++j) {
      center(0, j) = 0.5 * (spec.data_lower[j] + spec.data_upper[j]);
      half(0, j) = 0.5 * (spec.data_upper[j] - spec.data_lower[j]);
    }
  }
  return {center, half};
}

}  // namespace

void ModelSpec::validate() const {
  if (input_dim == 0 || z_dim == 0) throw ConfigError("model spec: dimensions must be positive");
  if (hidden.empty()) throw ConfigError("model spec: at least one feature layer is required");
  for (std::size_t h : hidden)
    if (h == 0) throw ConfigError("model spec: hidden widths must be positive");
  for (std::size_t h : generator_hidden)
    if (h == 0) throw ConfigError("model spec: generator widths must be positive");
  if (num_classes < 2) throw ConfigError("model spec: need at least 2 classes");
  if (data_lower.size() != data_upper.size() ||
      (!data_lower.empty() && data_lower.size() != input_dim)) {
    throw ConfigError("model spec: data range must have one bound per input dimension");
  }
  for (std::size_t j = 0; j < data_lower.size(); ++j) {
    if (!(data_upper[j] > data_lower[j])) {
      throw ConfigError("model spec: empty data range in dimension " + std::to_string(j));
    }
  }
  if (init != "glorot_uniform") throw ConfigError("model spec: unknown init scheme '" + init + "'");
}

const char* part_name(ModelPart part) noexcept {
  switch (part) {
    case ModelPart::FeatureExtractor: return "feature_extractor";
    case ModelPart::Head: return "head";
    case ModelPart::All: return "all";
  }
  return "all";
}

ClassifierModel::ClassifierModel(ModelSpec spec, ParameterVector params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  if (params_.size() != 2 * (spec_.hidden.size() + 1)) {
    throw ShapeError("classifier: parameter count does not match spec");
  }
}

bool ClassifierModel::in_part(std::string_view name, ModelPart part) {
  const bool head = name.starts_with("head.");
  switch (part) {
    case ModelPart::FeatureExtractor: return !head;
    case ModelPart::Head: return head;
    case ModelPart::All: return true;
  }
  return true;
}

Generator::Generator(ModelSpec spec, ParameterVector params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  if (params_.size() != 2 * (spec_.generator_hidden.size() + 1)) {
    throw ShapeError("generator: parameter count does not match spec");
  }
  std::tie(center_, half_width_) = output_range(spec_);
}

ClassifierModel init_model(const ModelSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  ParameterVector params;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    add_glorot_layer(params, rng, layer_name("features", i, "weight"),
                     layer_name("features", i, "bias"), fan_in, spec.hidden[i]);
    fan_in = spec.hidden[i];
  }
  add_glorot_layer(params, rng, "head.weight", "head.bias", fan_in, spec.num_classes);
  return ClassifierModel(spec, std::move(params));
}

Generator init_generator(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParameterVector params;
  std::size_t fan_in = spec.z_dim;
  for (std::size_t i = 0; i < spec.generator_hidden.size(); ++i) {
    add_glorot_layer(params, rng, layer_name("generator", i, "weight"),
                     layer_name("generator", i, "bias"), fan_in, spec.generator_hidden[i]);
    fan_in = spec.generator_hidden[i];
  }
  add_glorot_layer(params, rng, "generator.out.weight", "generator.out.bias", fan_in,
                   spec.input_dim);
  return Generator(spec, std::move(params));
}

ForwardResult classifier_forward(const ClassifierModel& model, const Tensor& batch) {
  require_width(batch, model.spec().input_dim, "classifier_forward");
  const ParameterVector& p = model.params();
  Tensor h = batch;
  const std::size_t layers = model.feature_layers();
  for (std::size_t i = 0; i < layers; ++i) {
    h = linalg::relu(linalg::add_row(linalg::matmul(h, p[2 * i].value), p[2 * i + 1].value));
  }
  Tensor logits = linalg::add_row(linalg::matmul(h, p[2 * layers].value), p[2 * layers + 1].value);
  return {std::move(h), std::move(logits)};
}

Tensor generator_forward(const Generator& gen, const Tensor& z) {
  require_width(z, gen.spec().z_dim, "generator_forward");
  Tape tape;
  std::vector<Var> params;
  {
    RecordingScope off(tape, false);
    for (const auto& p : gen.params()) params.push_back(tape.constant(p.value));
    return generator_forward(params, gen.center(), gen.half_width(), tape.constant(z)).value();
  }
}

ForwardVars classifier_forward(std::span<const Var> params, std::size_t feature_layers, Var batch) {
  if (params.size() != 2 * (feature_layers + 1)) {
    throw ShapeError("classifier_forward: wrong number of parameter tensors");
  }
  if (batch.cols() != params[0].rows()) {
    throw ShapeError("classifier_forward: batch width " + std::to_string(batch.cols()) +
                     " != expected " + std::to_string(params[0].rows()));
  }
  Var h = batch;
  for (std::size_t i = 0; i < feature_layers; ++i) {
    h = relu(affine(h, params[2 * i], params[2 * i + 1]));
  }
  Var logits = affine(h, params[2 * feature_layers], params[2 * feature_layers + 1]);
  return {h, logits};
}

Var generator_forward(std::span<const Var> params, const Tensor& center, const Tensor& half_width,
                      Var z) {
  if (params.size() < 2 || params.size() % 2 != 0) {
    throw ShapeError("generator_forward: wrong number of parameter tensors");
  }
  if (z.cols() != params[0].rows()) {
    throw ShapeError("generator_forward: noise width " + std::to_string(z.cols()) +
                     " != expected " + std::to_string(params[0].rows()));
  }
  const std::size_t layers = params.size() / 2 - 1;
  Var h = z;
  for (std::size_t i = 0; i < layers; ++i) h = relu(affine(h, params[2 * i], params[2 * i + 1]));
  Var squashed = tanh(affine(h, params[2 * layers], params[2 * layers + 1]));
  Tape& tape = z.tape();
  const std::size_t rows = squashed.rows();
  return squashed * repeat_rows(tape.constant(half_width), rows) +
         repeat_rows(tape.constant(center), rows);
}

double param_distance(const ParameterVector& a, const ParameterVector& b, ModelPart part) {
  if (!a.same_layout(b)) throw ShapeError("param_distance: parameter layouts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!ClassifierModel::in_part(a[i].name, part)) continue;
    auto av = a[i].value.values();
    auto bv = b[i].value.values();
    for (std::size_t k = 0; k < av.size(); ++k) s += (av[k] - bv[k]) * (av[k] - bv[k]);
  }
  return std::sqrt(s);
}

namespace {

void write_file(const std::filesystem::path& path, std::string_view kind, const ModelSpec& spec,
                const ParameterVector& params) {
  ordered_json header;
  header["format"] = "gfoes-model";
  header["version"] = kFormatVersion;
  header["kind"] = kind;
  header["spec"] = to_json(spec);
  header["seed"] = spec.seed;
  header["byte_order"] = "little";
  ordered_json shapes = ordered_json::array();
  for (const auto& p : params) shapes.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  header["parameters"] = shapes;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << header.dump() << '\n';
  for (const auto& p : params) {
    for (double v : p.value.values()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
  if (!out) throw IoError("failed writing model file " + path.string());
}

std::pair<ModelSpec, ParameterVector> read_file(const std::filesystem::path& path,
                                                std::string_view kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::string line;
  std::getline(in, line);
  ordered_json header;
  try {
    header = ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw IoError("model file " + path.string() + ": bad header: " + e.what());
  }
  if (header.value("format", "") != "gfoes-model" || header.value("version", 0) != kFormatVersion) {
    throw IoError("model file " + path.string() + ": unsupported format");
  }
  if (header.value("kind", "") != kind) {
    throw IoError("model file " + path.string() + ": expected a " + std::string(kind));
  }
  ModelSpec spec = model_spec_from_json(header.at("spec"));
  ParameterVector params;
  for (const auto& entry : header.at("parameters")) {
    auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> values(n);
    for (double& v : values) {
      std::uint64_t bits = 0;
      in.read(reinterpret_cast<char*>(&bits), sizeof bits);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      v = std::bit_cast<double>(bits);
    }
    if (!in) throw IoError("model file " + path.string() + ": truncated parameter data");
    params.add(entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values)));
  }
  return {std::move(spec), std::move(params)};
}

}  // namespace

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  write_file(path, "classifier", model.spec(), model.params());
}

ClassifierModel load_classifier(const std::filesystem::path& path) {
  auto [spec, params] = read_file(path, "classifier");
  return ClassifierModel(std::move(spec), std::move(params));
}

void save_model(const Generator& gen, const std::filesystem::path& path) {
  write_file(path, "generator", gen.spec(), gen.params());
}

Generator load_generator(const std::filesystem::path& path) {
  auto [spec, params] = read_file(path, "generator");
  return Generator(std::move(spec), std::move(params));
}

}  // namespace gfoes
