#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dial/runner.hpp"

namespace fs = std::filesystem;
using dial::Error;
using dial::ErrorCode;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

// NaN becomes null, which is what nlohmann::json does for non-finite numbers.
nlohmann::ordered_json metrics_json(const dial::MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["source_ce"] = r.source_ce;
  j["target_entropy"] = r.target_entropy;
  j["sparse"] = r.sparse;
  j["target_accuracy"] = r.target_accuracy;
  return j;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

dial::ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? dial::ExperimentConfig{} : dial::ExperimentConfig::load(path);
}

dial::DomainDataset load_data(const dial::ExperimentConfig& cfg, const std::string& data_path) {
  return data_path.empty() ? dial::make_dataset(cfg) : dial::load_csv(data_path);
}

// Writes to `path`, or stdout when path is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  auto out = open_out(path);
  out << text;
}

std::vector<double> parse_lambda_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (item.empty() || used != item.size()) {
      throw Error(ErrorCode::ConfigError, "bad lambda value '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::ConfigError, "empty lambda list");
  return out;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string generator = "blobs";
  std::size_t classes = 3;
  std::size_t dim = 2;
  std::size_t n = 600;
  std::size_t m = 600;
  double rotation = 50.0;
  double scale = 1.0;
  std::vector<double> translation{1.0, -1.0};
  double label_noise = 0.05;
  double noise_sd = 0.1;
  std::uint64_t seed = 1;
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  dial::DomainDataset ds;
  if (a.generator == "blobs") {
    dial::ShiftSpec shift{a.rotation, a.scale, a.translation, a.label_noise};
    ds = dial::gen_blobs(a.classes, a.dim, a.n, a.m, shift, a.seed);
  } else if (a.generator == "moons") {
    ds = dial::gen_moons(a.n, a.m, a.rotation, a.noise_sd, a.seed);
  } else {
    throw Error(ErrorCode::ConfigError, "unknown generator '" + a.generator + "'");
  }
  emit(a.out, dial::to_csv(ds));
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  const auto cfg = load_config(a.config);
  cfg.validate();
  const auto data = load_data(cfg, a.data);
  const fs::path dir(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

  open_out(dir / "config.txt") << cfg.to_text();
  auto metrics = open_out(dir / "metrics.jsonl");
  auto timing = open_out(dir / "timing.jsonl");

  dial::TrainOptions opts;
  opts.on_epoch = [&](const dial::MetricsRecord& r) {
    metrics << metrics_json(r).dump() << '\n';
    metrics.flush();
    nlohmann::ordered_json t;
    t["epoch"] = r.epoch;
    t["wall_clock_seconds"] = r.wall_clock_seconds;
    timing << t.dump() << '\n';
    if (!a.quiet) {
      std::fprintf(stderr, "epoch %3zu  lr %.3g  ce %.4f  ent %.4f  acc %.4f\n", r.epoch, r.lr,
                   r.source_ce, r.target_entropy, r.target_accuracy);
    }
  };
  auto result = dial::train(cfg, data, opts);

  dial::freeze_stats(result.net, result.params, data.source_x, dial::Domain::Source);
  dial::freeze_stats(result.net, result.params, data.target_x, dial::Domain::Target);
  dial::save_checkpoint((dir / "model.ckpt").string(), result.net, result.params);

  const auto& last = result.metrics.back();
  std::printf("target_accuracy %.6f\n", last.target_accuracy);
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  bool refreeze = false;
};

int run_eval(const EvalArgs& a) {
  auto [net, params] = dial::load_checkpoint(a.checkpoint);
  const auto data = dial::load_csv(a.data);
  if (a.refreeze) {
    dial::freeze_stats(net, params, data.source_x, dial::Domain::Source);
    dial::freeze_stats(net, params, data.target_x, dial::Domain::Target);
  }
  std::printf("source_accuracy %.6f\n",
              dial::evaluate(net, params, data.source_x, data.source_y, dial::Domain::Source));
  if (data.target_y) {
    std::printf("target_accuracy %.6f\n", dial::evaluate(net, params, data.target_x,
                                                          *data.target_y, dial::Domain::Target));
  }
  std::printf("target_entropy %.6f\n",
              dial::mean_prediction_entropy(net, params, data.target_x, dial::Domain::Target));
  return kExitOk;
}

struct SweepArgs {
  std::string config;
  std::string data;
  std::string lambdas = "0,0.01,0.03,0.1,0.3,1";
  std::string out;
  std::size_t threads = 1;
};

int run_sweep(const SweepArgs& a) {
  const auto cfg = load_config(a.config);
  cfg.validate();
  const auto data = load_data(cfg, a.data);
  const auto rows = dial::sweep_lambda(cfg, data, parse_lambda_list(a.lambdas), a.threads);
  std::ostringstream csv;
  dial::write_sweep_csv(csv, rows);
  emit(a.out, csv.str());
  return kExitOk;
}

struct AblateArgs {
  std::string config;
  std::string data;
  std::size_t seeds = 5;
  std::string out;
  std::size_t threads = 1;
};

int run_ablate(const AblateArgs& a) {
  const auto cfg = load_config(a.config);
  cfg.validate();
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= a.seeds; ++s) seeds.push_back(s);
  const auto table = a.data.empty() ? dial::ablate(cfg, seeds, a.threads)
                                    : dial::ablate(cfg, dial::load_csv(a.data), seeds, a.threads);
  std::ostringstream csv;
  dial::write_ablation_csv(csv, table);
  emit(a.out, csv.str());
  for (const auto& c : table.cells) {
    if (c.failed) std::fprintf(stderr, "cell '%s' failed: %s\n", c.label.c_str(), c.error.c_str());
  }
  return kExitOk;
}

struct GradCheckArgs {
  std::string config;
  std::string data;
  double tol = 1e-5;
};

int run_gradcheck(const GradCheckArgs& a) {
  const auto cfg = load_config(a.config);
  cfg.validate();
  const auto data = load_data(cfg, a.data);
  bool ok = true;
  for (const auto& e : dial::grad_check(cfg, data, a.tol)) {
    std::printf("%-12s max_rel_error %.3e  checked %zu  skipped %zu  %s\n", e.name.c_str(),
                e.result.max_rel_error, e.result.checked, e.result.skipped,
                e.passed ? "ok" : "FAIL");
    ok = ok && e.passed;
  }
  return ok ? kExitOk : kExitNumerical;
}

int run_config_keys() {
  for (const auto& k : dial::config_keys()) std::printf("%-18s %s\n", k.name, k.help);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain alignment layers with entropy regularization"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic two-domain dataset as CSV");
  gen_cmd->add_option("--generator", gen.generator, "blobs | moons")->capture_default_str();
  gen_cmd->add_option("--classes", gen.classes, "Number of classes (blobs)")->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim, "Feature dimension (blobs)")->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Source samples")->capture_default_str();
  gen_cmd->add_option("--m", gen.m, "Target samples")->capture_default_str();
  gen_cmd->add_option("--rotation", gen.rotation, "Target rotation in degrees")
      ->capture_default_str();
  gen_cmd->add_option("--scale", gen.scale, "Target scale (blobs)")->capture_default_str();
  gen_cmd->add_option("--translation", gen.translation, "Target translation (blobs)")
      ->delimiter(',')
      ->capture_default_str();
  gen_cmd->add_option("--label-noise", gen.label_noise, "Target label noise (blobs)")
      ->capture_default_str();
  gen_cmd->add_option("--noise-sd", gen.noise_sd, "Noise standard deviation (moons)")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output CSV path (default stdout)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  train_cmd->add_option("--config", tr.config, "Config file (defaults when omitted)");
  train_cmd->add_option("--data", tr.data, "CSV dataset overriding the config's generator");
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a CSV dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data, "CSV dataset")->required();
  eval_cmd->add_flag("--refreeze", ev.refreeze,
                     "Re-estimate frozen statistics on this dataset's domain sets");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Select lambda on held-out source accuracy");
  sweep_cmd->add_option("--config", sw.config, "Config file");
  sweep_cmd->add_option("--data", sw.data, "CSV dataset");
  sweep_cmd->add_option("--lambdas", sw.lambdas, "Comma-separated grid")->capture_default_str();
  sweep_cmd->add_option("--out", sw.out, "Output CSV path (default stdout)");
  sweep_cmd->add_option("--threads", sw.threads, "Parallel runs")->check(CLI::PositiveNumber);

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation grid over seeds 1..N");
  ablate_cmd->add_option("--config", ab.config, "Config file");
  ablate_cmd->add_option("--data", ab.data, "CSV dataset shared by all seeds");
  ablate_cmd->add_option("--seeds", ab.seeds, "Number of seeds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ablate_cmd->add_option("--out", ab.out, "Output CSV path (default stdout)");
  ablate_cmd->add_option("--threads", ab.threads, "Parallel runs")->check(CLI::PositiveNumber);

  GradCheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  gc_cmd->add_option("--config", gc.config, "Config file");
  gc_cmd->add_option("--data", gc.data, "CSV dataset");
  gc_cmd->add_option("--tol", gc.tol, "Maximum relative error")->capture_default_str();

  auto* keys_cmd = app.add_subcommand("config-keys", "List accepted config keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*sweep_cmd) return run_sweep(sw);
    if (*ablate_cmd) return run_ablate(ab);
    if (*gc_cmd) return run_gradcheck(gc);
    if (*keys_cmd) return run_config_keys();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return dial::is_numerical(e.code()) ? kExitNumerical : kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
