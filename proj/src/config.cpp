#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "dial/runner.hpp"

namespace dial {

namespace {

constexpr std::array<ConfigKey, 31> kKeys{{
    {"dataset", "blobs | moons | csv"},
    {"data_path", "CSV file (dataset = csv)"},
    {"data_classes", "number of classes K (blobs)"},
    {"data_dim", "feature dimension d (blobs)"},
    {"data_n", "source sample count"},
    {"data_m", "target sample count"},
    {"data_rotation_deg", "target rotation in degrees"},
    {"data_scale", "target scale factor (blobs)"},
    {"data_translation", "comma-separated target translation (blobs)"},
    {"data_label_noise", "probability of replacing a target label (blobs)"},
    {"data_noise_sd", "noise standard deviation (moons)"},
    {"data_seed", "generator seed; empty uses `seed`"},
    {"hidden", "comma-separated hidden layer widths"},
    {"da_on_head", "append a DA-layer after the classifier layer (true/false)"},
    {"variant", "none | normal_ml | normal_map | laplace_ml"},
    {"epsilon", "prior variance for normal_map"},
    {"affine", "learnable scale/shift after each DA-layer (true/false)"},
    {"entropy_on", "include the target entropy term (true/false)"},
    {"lambda", "target entropy weight"},
    {"lambda_sparse", "weight of the sparse centered-feature penalty"},
    {"lr0", "initial learning rate"},
    {"momentum", "SGD momentum in [0, 1)"},
    {"wd", "weight decay on dense weights"},
    {"epochs", "number of passes over the source set"},
    {"lr_drop_factor", "learning-rate divisor at each drop"},
    {"lr_drop_at", "comma-separated epoch fractions at which lr drops"},
    {"batch_mode", "proportional | fixed"},
    {"batch_size", "rows per batch (proportional)"},
    {"batch_source", "source rows per batch (fixed)"},
    {"batch_target", "target rows per batch (fixed)"},
    {"seed", "experiment seed"},
}};

[[noreturn]] void config_fail(const std::string& what) {
  throw Error(ErrorCode::ConfigError, what);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
    config_fail(key + ": expected a number, got '" + v + "'");
  }
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    config_fail(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    config_fail(key + ": integer out of range");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  config_fail(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += f(xs[i]);
  }
  return out;
}

}  // namespace

std::span<const ConfigKey> config_keys() { return kKeys; }

void ExperimentConfig::validate() const {
  const auto& g = data.generator;
  if (g != "blobs" && g != "moons" && g != "csv") config_fail("dataset: unknown generator " + g);
  if (g == "csv" && data.path.empty()) config_fail("data_path is required for dataset = csv");
  if (!(data.scale > 0.0)) config_fail("data_scale must be positive");
  if (!(data.label_noise >= 0.0 && data.label_noise < 1.0)) {
    config_fail("data_label_noise must lie in [0, 1)");
  }
  if (!(data.noise_sd >= 0.0)) config_fail("data_noise_sd must be nonnegative");
  for (std::size_t h : hidden) {
    if (h == 0) config_fail("hidden widths must be positive");
  }
  if (!(epsilon >= 0.0)) config_fail("epsilon must be nonnegative");
  if (!(lambda >= 0.0)) config_fail("lambda must be nonnegative");
  if (!(lambda_sparse >= 0.0)) config_fail("lambda_sparse must be nonnegative");
  if (!(lr0 > 0.0)) config_fail("lr0 must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) config_fail("momentum must lie in [0, 1)");
  if (!(wd >= 0.0)) config_fail("wd must be nonnegative");
  if (epochs == 0) config_fail("epochs must be positive");
  if (!(lr_drop_factor > 1.0)) config_fail("lr_drop_factor must exceed 1");
  for (double f : lr_drop_at) {
    if (!(f > 0.0 && f <= 1.0)) config_fail("lr_drop_at fractions must lie in (0, 1]");
  }
  if (batch.kind == BatchMode::Kind::Proportional && batch.batch_size < 4) {
    config_fail("batch_size must be >= 4");
  }
  if (batch.kind == BatchMode::Kind::Fixed && (batch.n_source < 2 || batch.n_target < 2)) {
    config_fail("batch_source and batch_target must be >= 2");
  }
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::string variant_name = "normal_ml";

  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      config_fail("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& k : kKeys) known = known || key == k.name;
    if (!known) config_fail("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.emplace(key, v).second) {
      config_fail("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }

    auto& d = cfg.data;
    if (key == "dataset") d.generator = v;
    else if (key == "data_path") d.path = v;
    else if (key == "data_classes") d.classes = to_u64(key, v);
    else if (key == "data_dim") d.dim = to_u64(key, v);
    else if (key == "data_n") d.n = to_u64(key, v);
    else if (key == "data_m") d.m = to_u64(key, v);
    else if (key == "data_rotation_deg") d.rotation_deg = to_double(key, v);
    else if (key == "data_scale") d.scale = to_double(key, v);
    else if (key == "data_translation") {
      d.translation.clear();
      for (const auto& t : split_list(v)) d.translation.push_back(to_double(key, t));
    } else if (key == "data_label_noise") d.label_noise = to_double(key, v);
    else if (key == "data_noise_sd") d.noise_sd = to_double(key, v);
    else if (key == "data_seed") {
      if (v.empty()) d.seed.reset();
      else d.seed = to_u64(key, v);
    } else if (key == "hidden") {
      cfg.hidden.clear();
      for (const auto& t : split_list(v)) cfg.hidden.push_back(to_u64(key, t));
    } else if (key == "da_on_head") cfg.da_on_head = to_bool(key, v);
    else if (key == "variant") variant_name = v;
    else if (key == "epsilon") cfg.epsilon = to_double(key, v);
    else if (key == "affine") cfg.affine = to_bool(key, v);
    else if (key == "entropy_on") cfg.entropy_on = to_bool(key, v);
    else if (key == "lambda") cfg.lambda = to_double(key, v);
    else if (key == "lambda_sparse") cfg.lambda_sparse = to_double(key, v);
    else if (key == "lr0") cfg.lr0 = to_double(key, v);
    else if (key == "momentum") cfg.momentum = to_double(key, v);
    else if (key == "wd") cfg.wd = to_double(key, v);
    else if (key == "epochs") cfg.epochs = to_u64(key, v);
    else if (key == "lr_drop_factor") cfg.lr_drop_factor = to_double(key, v);
    else if (key == "lr_drop_at") {
      cfg.lr_drop_at.clear();
      for (const auto& t : split_list(v)) cfg.lr_drop_at.push_back(to_double(key, t));
    } else if (key == "batch_mode") {
      if (v == "proportional") cfg.batch.kind = BatchMode::Kind::Proportional;
      else if (v == "fixed") cfg.batch.kind = BatchMode::Kind::Fixed;
      else config_fail("batch_mode: expected proportional or fixed, got '" + v + "'");
    } else if (key == "batch_size") cfg.batch.batch_size = to_u64(key, v);
    else if (key == "batch_source") cfg.batch.n_source = to_u64(key, v);
    else if (key == "batch_target") cfg.batch.n_target = to_u64(key, v);
    else if (key == "seed") cfg.seed = to_u64(key, v);
  }

  if (variant_name == "none") {
    cfg.variant.reset();
  } else if (variant_name == "normal_ml" || variant_name == "normal_map" ||
             variant_name == "laplace_ml") {
    if (!(cfg.epsilon >= 0.0)) config_fail("epsilon must be nonnegative");
    cfg.variant = ReferenceVariant::parse(variant_name, cfg.epsilon);
  } else {
    config_fail("variant: unknown value '" + variant_name + "'");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_fail("cannot read config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  auto u = [](std::size_t v) { return std::to_string(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  out << "dataset = " << data.generator << '\n'
      << "data_path = " << data.path << '\n'
      << "data_classes = " << data.classes << '\n'
      << "data_dim = " << data.dim << '\n'
      << "data_n = " << data.n << '\n'
      << "data_m = " << data.m << '\n'
      << "data_rotation_deg = " << fmt(data.rotation_deg) << '\n'
      << "data_scale = " << fmt(data.scale) << '\n'
      << "data_translation = " << join(data.translation, fmt) << '\n'
      << "data_label_noise = " << fmt(data.label_noise) << '\n'
      << "data_noise_sd = " << fmt(data.noise_sd) << '\n'
      << "data_seed = " << (data.seed ? std::to_string(*data.seed) : "") << '\n'
      << "hidden = " << join(hidden, u) << '\n'
      << "da_on_head = " << b(da_on_head) << '\n'
      << "variant = " << (variant ? variant->name() : "none") << '\n'
      << "epsilon = " << fmt(epsilon) << '\n'
      << "affine = " << b(affine) << '\n'
      << "entropy_on = " << b(entropy_on) << '\n'
      << "lambda = " << fmt(lambda) << '\n'
      << "lambda_sparse = " << fmt(lambda_sparse) << '\n'
      << "lr0 = " << fmt(lr0) << '\n'
      << "momentum = " << fmt(momentum) << '\n'
      << "wd = " << fmt(wd) << '\n'
      << "epochs = " << epochs << '\n'
      << "lr_drop_factor = " << fmt(lr_drop_factor) << '\n'
      << "lr_drop_at = " << join(lr_drop_at, fmt) << '\n'
      << "batch_mode = "
      << (batch.kind == BatchMode::Kind::Proportional ? "proportional" : "fixed") << '\n'
      << "batch_size = " << batch.batch_size << '\n'
      << "batch_source = " << batch.n_source << '\n'
      << "batch_target = " << batch.n_target << '\n'
      << "seed = " << seed << '\n';
  return out.str();
}

DomainDataset make_dataset(const ExperimentConfig& config) {
  const auto& d = config.data;
  const std::uint64_t seed = d.seed.value_or(config.seed);
  if (d.generator == "blobs") {
    ShiftSpec shift;
    shift.rotation_deg = d.rotation_deg;
    shift.scale = d.scale;
    shift.translation = d.translation;
    shift.label_noise = d.label_noise;
    return gen_blobs(d.classes, d.dim, d.n, d.m, shift, seed);
  }
  if (d.generator == "moons") return gen_moons(d.n, d.m, d.rotation_deg, d.noise_sd, seed);
  if (d.generator == "csv") return load_csv(d.path);
  config_fail("dataset: unknown generator " + d.generator);
}

std::vector<LayerSpec> make_architecture(const ExperimentConfig& config, std::size_t input_dim,
                                         std::size_t classes) {
  std::vector<LayerSpec> arch;
  std::size_t width = input_dim;
  auto add_da = [&]() {
    if (config.variant) arch.push_back(LayerSpec::dalayer(*config.variant, 1.0, config.affine));
  };
  for (std::size_t h : config.hidden) {
    arch.push_back(LayerSpec::dense(width, h));
    add_da();
    arch.push_back(LayerSpec::relu());
    width = h;
  }
  arch.push_back(LayerSpec::dense(width, classes));
  if (config.da_on_head) add_da();
  return arch;
}

}  // namespace dial
