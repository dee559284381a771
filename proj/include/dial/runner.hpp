#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dial/align.hpp"
#include "dial/data.hpp"
#include "dial/error.hpp"
#include "dial/net.hpp"
#include "dial/objective.hpp"

namespace dial {

// ---------------------------------------------------------------------------
// Configuration

struct DatasetSpec {
  std::string generator = "blobs";  // blobs | moons | csv
  std::string path;                 // csv only
  std::size_t classes = 3;
  std::size_t dim = 2;
  std::size_t n = 600;
  std::size_t m = 600;
  double rotation_deg = 50.0;
  double scale = 1.0;
  std::vector<double> translation{1.0, -1.0};
  double label_noise = 0.05;
  double noise_sd = 0.1;  // moons only
  // Generator seed; when unset the experiment seed is used.
  std::optional<std::uint64_t> seed;
};

// Defaults are the desk-scale "blobs-shift" benchmark.
struct ExperimentConfig {
  DatasetSpec data;
  std::vector<std::size_t> hidden{64, 64};
  bool da_on_head = true;
  // nullopt: plain network without DA-layers.
  std::optional<ReferenceVariant> variant = ReferenceVariant::normal_ml();
  // Prior variance for NormalMAP layers, including the ablation's Epsilon cells.
  double epsilon = 1.0;
  bool affine = false;
  bool entropy_on = true;
  double lambda = 0.1;
  double lambda_sparse = 1e-4;
  double lr0 = 1e-3;
  double momentum = 0.9;
  double wd = 5e-4;
  std::size_t epochs = 60;
  double lr_drop_factor = 10.0;
  std::vector<double> lr_drop_at{0.9};
  BatchMode batch = BatchMode::proportional(32);
  std::uint64_t seed = 1;

  // Entropy weight actually used by the objective.
  double effective_lambda() const { return entropy_on ? lambda : 0.0; }
  std::size_t min_rows_per_domain() const { return variant ? variant->min_rows() : 1; }

  // Throws ConfigError.
  void validate() const;

  // Flat `key = value` text; parse() rejects unknown keys.
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string to_text() const;
};

struct ConfigKey {
  const char* name;
  const char* help;
};
// Every key accepted by ExperimentConfig::parse, in to_text() order.
std::span<const ConfigKey> config_keys();

DomainDataset make_dataset(const ExperimentConfig& config);
std::vector<LayerSpec> make_architecture(const ExperimentConfig& config, std::size_t input_dim,
                                         std::size_t classes);

// ---------------------------------------------------------------------------
// Optimization

struct OptimizerState {
  std::vector<double> velocity;
  std::uint64_t steps = 0;

  explicit OptimizerState(std::size_t n = 0) : velocity(n, 0.0) {}
};

// g' = g + wd * W (dense weights only); v = momentum * v - lr * g'; theta += v.
// Throws NonFiniteGradient before touching anything if a gradient is NaN/Inf.
void sgd_step(ParamStore& params, OptimizerState& opt, double lr, double momentum, double wd);

// lr0 / factor^(number of drop fractions f with epoch >= f * epochs).
double lr_at(std::size_t epoch, const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Training and evaluation

struct MetricsRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double source_ce = 0.0;
  double target_entropy = 0.0;
  double sparse = 0.0;
  double target_accuracy = 0.0;  // NaN when the target set is unlabeled
  double wall_clock_seconds = 0.0;
};

struct TrainResult {
  Network net;
  ParamStore params;
  std::vector<MetricsRecord> metrics;
};

struct TrainOptions {
  bool eval_each_epoch = true;
  // Called after every epoch's record is complete.
  std::function<void(const MetricsRecord&)> on_epoch;
};

// Thrown when the loss becomes non-finite; carries the completed epochs.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, std::vector<MetricsRecord> partial)
      : Error(ErrorCode::Diverged, message), partial_(std::move(partial)) {}
  const std::vector<MetricsRecord>& partial() const noexcept { return partial_; }

 private:
  std::vector<MetricsRecord> partial_;
};

TrainResult train(const ExperimentConfig& config, const DomainDataset& data,
                  const TrainOptions& options = {});

// Runs the whole domain set through the network as one batch and stores each
// DA-layer's estimate as that domain's frozen parameters. Layers switch to
// frozen mode once target parameters are stored.
void freeze_stats(Network& net, const ParamStore& params, const Matrix& x, Domain domain);

// Accuracy over rows with label >= 0. Throws EmptyInput if there are none.
double evaluate(const Network& net, const ParamStore& params, const Matrix& x,
                std::span<const int> y, Domain domain);

// Mean prediction entropy of frozen-mode outputs; no labels involved.
double mean_prediction_entropy(const Network& net, const ParamStore& params, const Matrix& x,
                               Domain domain);

// Freezes both domains on a copy of `net` and evaluates on the target set.
double frozen_target_accuracy(const Network& net, const ParamStore& params,
                              const DomainDataset& data);

// ---------------------------------------------------------------------------
// Lambda sweep

struct SweepRow {
  double lambda = 0.0;
  double source_val_accuracy = 0.0;
  double target_accuracy = 0.0;
  double target_entropy = 0.0;
  bool selected = false;
};

// Trains once per lambda on 80% of the source set and selects by accuracy on
// the held-out 20%, ties broken by the lower unlabeled target entropy, then by
// the smaller lambda. Target accuracy is reported, never used for selection.
std::vector<SweepRow> sweep_lambda(const ExperimentConfig& config, const DomainDataset& data,
                                   const std::vector<double>& grid, std::size_t threads = 1);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Ablation

struct AblationCell {
  std::string label;  // e.g. "BN sparse"
  bool entropy_on = false;
  std::optional<ReferenceVariant> variant;
  bool sparse = false;
  std::vector<double> accuracies;  // one per seed
  double mean = 0.0;
  double sd = 0.0;
  bool failed = false;
  std::string error;
};

struct AblationTable {
  std::vector<AblationCell> cells;
  std::vector<std::uint64_t> seeds;
};

// The 12 cells in reporting order: source baseline, entropy-only baseline,
// then {BN, Epsilon, sparse, Epsilon sparse, Laplacian BN} with and without
// the entropy term.
std::vector<AblationCell> ablation_grid(const ExperimentConfig& base);
ExperimentConfig cell_config(const ExperimentConfig& base, const AblationCell& cell,
                             std::uint64_t seed);

// Generator datasets are redrawn per seed (unless data.seed pins them); a CSV
// dataset is loaded once and shared.
AblationTable ablate(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                     std::size_t threads = 1);
AblationTable ablate(const ExperimentConfig& base, const DomainDataset& data,
                     const std::vector<std::uint64_t>& seeds, std::size_t threads = 1);

void write_ablation_csv(std::ostream& out, const AblationTable& table);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // parameters whose perturbation crosses a kink
};

// Relative error |a - n| / max(|a|, |n|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-4;
inline constexpr double kGradCheckStep = 1e-5;

// Compares the analytic gradient of the full objective against central
// differences for every parameter on one train-mode batch.
GradCheckResult check_gradients(const Network& net, const ParamStore& params, const Matrix& x,
                                const DomainMask& mask, std::span<const int> labels,
                                const LossWeights& weights, double step = kGradCheckStep);

struct GradCheckEntry {
  std::string name;
  GradCheckResult result;
  bool passed = false;
};

// One entry per DA variant plus a plain-network entry, on a small network
// and the first mixed batch of the configured plan.
std::vector<GradCheckEntry> grad_check(const ExperimentConfig& config, const DomainDataset& data,
                                       double tolerance);

}  // namespace dial
