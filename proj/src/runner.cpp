#include "dial/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace dial {

namespace {

// derive_seed stream ids for the consumers of ExperimentConfig::seed.
enum Stream : std::uint64_t {
  kInit = 101,
  kBatches = 102,
  kHoldout = 103,
};

// Runs fn(i) for i in [0, count) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimization

void sgd_step(ParamStore& params, OptimizerState& opt, double lr, double momentum, double wd) {
  const std::size_t n = params.size();
  if (params.grads.size() != n || opt.velocity.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(params.grads[i])) {
      throw Error(ErrorCode::NonFiniteGradient,
                  "gradient entry " + std::to_string(i) + " is not finite");
    }
  }
  if (wd != 0.0) {
    for (const auto& slot : params.decayed) {
      for (std::size_t i = slot.offset; i < slot.offset + slot.size; ++i) {
        params.grads[i] += wd * params.values[i];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    opt.velocity[i] = momentum * opt.velocity[i] - lr * params.grads[i];
    params.values[i] += opt.velocity[i];
  }
  ++opt.steps;
}

double lr_at(std::size_t epoch, const ExperimentConfig& config) {
  double lr = config.lr0;
  const double e = static_cast<double>(epoch);
  const double total = static_cast<double>(config.epochs);
  for (double f : config.lr_drop_at) {
    // Tolerance so f * epochs landing a rounding error above an integer
    // still drops at that epoch.
    if (e >= f * total - 1e-9) lr /= config.lr_drop_factor;
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Freezing and evaluation

void freeze_stats(Network& net, const ParamStore& params, const Matrix& x, Domain domain) {
  if (!net.has_da_layers()) return;
  if (x.rows() == 0) throw Error(ErrorCode::EmptyInput, "cannot freeze on an empty set");
  // The recording pass estimates statistics on the whole set, so layer k sees
  // inputs produced by layers < k exactly as their frozen versions would.
  const auto indices = net.da_layer_indices();
  for (std::size_t k : indices) net.da_layer(k).set_mode(DaMode::Train);
  const ForwardTrace trace = net.forward(params, x, uniform_mask(x.rows(), domain),
                                         ForwardMode::Train);
  bool target_ready = true;
  for (std::size_t k : indices) {
    const auto& p = trace.layers[k].da->params[index_of(domain)];
    DaLayer& da = net.da_layer(k);
    da.freeze(domain, *p);
    target_ready = target_ready && da.frozen(Domain::Target).has_value();
  }
  if (target_ready) net.set_da_mode(DaMode::Frozen);
}

namespace {

ForwardMode frozen_mode(Domain d) {
  return d == Domain::Source ? ForwardMode::FrozenSource : ForwardMode::FrozenTarget;
}

}  // namespace

double evaluate(const Network& net, const ParamStore& params, const Matrix& x,
                std::span<const int> y, Domain domain) {
  if (y.size() != x.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "label count does not match rows");
  }
  std::size_t labeled = 0;
  for (int v : y) labeled += v >= 0 ? 1 : 0;
  if (labeled == 0) throw Error(ErrorCode::EmptyInput, "no labeled rows to evaluate");
  const auto pred = net.predict(params, x, frozen_mode(domain));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= 0 && pred[i] == y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labeled);
}

double mean_prediction_entropy(const Network& net, const ParamStore& params, const Matrix& x,
                               Domain domain) {
  if (x.rows() == 0) throw Error(ErrorCode::EmptyInput, "no rows");
  const auto trace = net.forward(params, x, {}, frozen_mode(domain));
  return target_entropy(trace.logits, uniform_mask(x.rows(), Domain::Target)).value;
}

double frozen_target_accuracy(const Network& net, const ParamStore& params,
                              const DomainDataset& data) {
  if (!data.target_y) return std::numeric_limits<double>::quiet_NaN();
  Network scratch = net;
  freeze_stats(scratch, params, data.source_x, Domain::Source);
  freeze_stats(scratch, params, data.target_x, Domain::Target);
  return evaluate(scratch, params, data.target_x, *data.target_y, Domain::Target);
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const ExperimentConfig& config, const DomainDataset& data,
                  const TrainOptions& options) {
  config.validate();
  data.validate();

  const auto arch = make_architecture(config, data.feature_dim(), data.classes);
  auto [net, params] = Network::build(arch, derive_seed(config.seed, kInit));
  const BatchPlan plan = compose_batches(data.source_count(), data.target_count(), config.batch,
                                         derive_seed(config.seed, kBatches),
                                         config.min_rows_per_domain());
  const LossWeights weights{config.effective_lambda(), config.lambda_sparse, config.wd};

  OptimizerState opt(params.size());
  std::vector<MetricsRecord> metrics;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    double ce_sum = 0.0;
    double ent_sum = 0.0;
    double sparse_sum = 0.0;
    const auto batches = plan.epoch(epoch);

    for (const Batch& batch : batches) {
      const Matrix x = vstack(data.source_x.select_rows(batch.source_idx),
                              data.target_x.select_rows(batch.target_idx));
      const DomainMask mask = batch.mask();
      std::vector<int> labels;
      labels.reserve(mask.size());
      for (std::size_t i : batch.source_idx) labels.push_back(data.source_y[i]);
      labels.resize(mask.size(), -1);

      const ForwardTrace trace = net.forward(params, x, mask, ForwardMode::Train);
      const LossBreakdown loss =
          total_loss(trace.logits, labels, mask, trace.sparse_total, params, weights);
      if (!std::isfinite(loss.total)) {
        throw TrainingDiverged("non-finite loss in epoch " + std::to_string(epoch),
                               std::move(metrics));
      }
      net.backward(params, trace, loss.d_logits, weights.sparse);
      try {
        sgd_step(params, opt, lr, config.momentum, config.wd);
      } catch (const Error& e) {
        throw TrainingDiverged(e.message(), std::move(metrics));
      }
      ce_sum += loss.source_ce;
      ent_sum += loss.target_entropy;
      sparse_sum += loss.sparse;
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    const double nb = static_cast<double>(batches.size());
    rec.source_ce = ce_sum / nb;
    rec.target_entropy = ent_sum / nb;
    rec.sparse = sparse_sum / nb;
    rec.target_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (options.eval_each_epoch || epoch + 1 == config.epochs) {
      rec.target_accuracy = frozen_target_accuracy(net, params, data);
    }
    rec.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }

  return {std::move(net), std::move(params), std::move(metrics)};
}

// ---------------------------------------------------------------------------
// Lambda sweep

std::vector<SweepRow> sweep_lambda(const ExperimentConfig& config, const DomainDataset& data,
                                   const std::vector<double>& grid, std::size_t threads) {
  if (grid.empty()) throw Error(ErrorCode::ConfigError, "lambda grid is empty");
  for (double l : grid) {
    if (!(l >= 0.0)) throw Error(ErrorCode::ConfigError, "lambda values must be nonnegative");
  }
  data.validate();

  // Hold out 20% of the source set for selection.
  RngStream rng(derive_seed(config.seed, kHoldout));
  const auto perm = rng.permutation(data.source_count());
  const std::size_t n_val = std::max<std::size_t>(1, data.source_count() / 5);
  if (n_val >= data.source_count()) {
    throw Error(ErrorCode::BadSpec, "source set too small for a validation split");
  }
  std::vector<std::size_t> val_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> fit_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(fit_idx.begin(), fit_idx.end());

  DomainDataset fit = data;
  fit.source_x = data.source_x.select_rows(fit_idx);
  fit.source_y.clear();
  for (std::size_t i : fit_idx) fit.source_y.push_back(data.source_y[i]);
  const Matrix val_x = data.source_x.select_rows(val_idx);
  std::vector<int> val_y;
  for (std::size_t i : val_idx) val_y.push_back(data.source_y[i]);

  std::vector<SweepRow> rows(grid.size());
  std::vector<std::string> errors(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t g) {
    try {
      ExperimentConfig cfg = config;
      cfg.entropy_on = true;
      cfg.lambda = grid[g];
      TrainOptions opts;
      opts.eval_each_epoch = false;
      auto result = train(cfg, fit, opts);
      Network net = result.net;
      freeze_stats(net, result.params, fit.source_x, Domain::Source);
      freeze_stats(net, result.params, fit.target_x, Domain::Target);
      SweepRow& row = rows[g];
      row.lambda = grid[g];
      row.source_val_accuracy = evaluate(net, result.params, val_x, val_y, Domain::Source);
      row.target_accuracy =
          data.target_y ? evaluate(net, result.params, data.target_x, *data.target_y,
                                   Domain::Target)
                        : std::numeric_limits<double>::quiet_NaN();
      row.target_entropy =
          mean_prediction_entropy(net, result.params, data.target_x, Domain::Target);
    } catch (const std::exception& e) {
      errors[g] = e.what();
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(ErrorCode::Diverged, "sweep run failed: " + e);
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < rows.size(); ++g) {
    const SweepRow& a = rows[g];
    const SweepRow& b = rows[best];
    if (a.source_val_accuracy != b.source_val_accuracy) {
      if (a.source_val_accuracy > b.source_val_accuracy) best = g;
    } else if (a.target_entropy != b.target_entropy) {
      if (a.target_entropy < b.target_entropy) best = g;
    } else if (a.lambda < b.lambda) {
      best = g;
    }
  }
  rows[best].selected = true;
  return rows;
}

namespace {

std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "lambda,source_val_accuracy,target_accuracy,target_entropy,selected\n";
  for (const auto& r : rows) {
    char lam[40];
    std::snprintf(lam, sizeof lam, "%.17g", r.lambda);
    out << lam << ',' << csv_num(r.source_val_accuracy) << ',' << csv_num(r.target_accuracy)
        << ',' << csv_num(r.target_entropy) << ',' << (r.selected ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationCell> ablation_grid(const ExperimentConfig& base) {
  const auto bn = ReferenceVariant::normal_ml();
  const auto eps = ReferenceVariant::normal_map(base.epsilon);
  const auto lap = ReferenceVariant::laplace_ml();
  auto cell = [](std::string label, bool entropy, std::optional<ReferenceVariant> v,
                 bool sparse) {
    AblationCell c;
    c.label = std::move(label);
    c.entropy_on = entropy;
    c.variant = v;
    c.sparse = sparse;
    return c;
  };
  std::vector<AblationCell> cells;
  cells.push_back(cell("source", false, std::nullopt, false));
  cells.push_back(cell("entropy loss", true, std::nullopt, false));
  for (bool entropy : {true, false}) {
    cells.push_back(cell("BN", entropy, bn, false));
    cells.push_back(cell("Epsilon", entropy, eps, false));
    cells.push_back(cell("sparse", entropy, bn, true));
    cells.push_back(cell("Epsilon sparse", entropy, eps, true));
    cells.push_back(cell("Laplacian BN", entropy, lap, false));
  }
  return cells;
}

namespace {

constexpr double kDefaultSparseWeight = 1e-4;

}  // namespace

ExperimentConfig cell_config(const ExperimentConfig& base, const AblationCell& cell,
                             std::uint64_t seed) {
  ExperimentConfig cfg = base;
  cfg.seed = seed;
  cfg.variant = cell.variant;
  cfg.entropy_on = cell.entropy_on;
  if (cell.entropy_on && !(cfg.lambda > 0.0)) {
    throw Error(ErrorCode::ConfigError, "entropy cells need lambda > 0");
  }
  cfg.lambda_sparse =
      cell.sparse ? (base.lambda_sparse > 0.0 ? base.lambda_sparse : kDefaultSparseWeight) : 0.0;
  return cfg;
}

namespace {

AblationTable run_ablation(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                           std::size_t threads,
                           const std::function<const DomainDataset&(std::size_t)>& dataset_for) {
  if (seeds.empty()) throw Error(ErrorCode::ConfigError, "ablation needs at least one seed");
  AblationTable table;
  table.seeds = seeds;
  table.cells = ablation_grid(base);
  const std::size_t n_cells = table.cells.size();
  const std::size_t runs = n_cells * seeds.size();

  std::vector<double> acc(runs, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> err(runs);
  parallel_for(runs, threads, [&](std::size_t r) {
    const std::size_t c = r / seeds.size();
    const std::size_t s = r % seeds.size();
    try {
      const ExperimentConfig cfg = cell_config(base, table.cells[c], seeds[s]);
      TrainOptions opts;
      opts.eval_each_epoch = false;
      const auto result = train(cfg, dataset_for(s), opts);
      acc[r] = result.metrics.back().target_accuracy;
    } catch (const std::exception& e) {
      err[r] = e.what();
    }
  });

  for (std::size_t c = 0; c < n_cells; ++c) {
    AblationCell& cell = table.cells[c];
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const std::size_t r = c * seeds.size() + s;
      if (!err[r].empty()) {
        cell.failed = true;
        if (cell.error.empty()) cell.error = err[r];
        continue;
      }
      cell.accuracies.push_back(acc[r]);
    }
    if (cell.failed || cell.accuracies.empty()) {
      cell.failed = true;
      cell.mean = cell.sd = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double k = static_cast<double>(cell.accuracies.size());
    cell.mean = std::accumulate(cell.accuracies.begin(), cell.accuracies.end(), 0.0) / k;
    double ss = 0.0;
    for (double a : cell.accuracies) ss += (a - cell.mean) * (a - cell.mean);
    cell.sd = cell.accuracies.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
  }
  return table;
}

}  // namespace

AblationTable ablate(const ExperimentConfig& base, const DomainDataset& data,
                     const std::vector<std::uint64_t>& seeds, std::size_t threads) {
  data.validate();
  return run_ablation(base, seeds, threads, [&](std::size_t) -> const DomainDataset& {
    return data;
  });
}

AblationTable ablate(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                     std::size_t threads) {
  base.validate();
  const bool per_seed = base.data.generator != "csv" && !base.data.seed;
  std::vector<DomainDataset> datasets;
  if (per_seed) {
    for (std::uint64_t s : seeds) {
      ExperimentConfig cfg = base;
      cfg.seed = s;
      datasets.push_back(make_dataset(cfg));
    }
  } else {
    datasets.push_back(make_dataset(base));
  }
  return run_ablation(base, seeds, threads, [&](std::size_t s) -> const DomainDataset& {
    return datasets[per_seed ? s : 0];
  });
}

void write_ablation_csv(std::ostream& out, const AblationTable& table) {
  out << "entropy,variant,sparse,label,mean_accuracy,sd_accuracy,seeds,status\n";
  for (const auto& c : table.cells) {
    out << (c.entropy_on ? "on" : "off") << ',' << (c.variant ? c.variant->name() : "none")
        << ',' << (c.sparse ? 1 : 0) << ',' << c.label << ',' << csv_num(c.mean) << ','
        << csv_num(c.sd) << ',' << table.seeds.size() << ',' << (c.failed ? "failed" : "ok")
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

struct ObjectiveEval {
  double value;
  std::vector<std::int64_t> signature;
};

ObjectiveEval objective_at(const Network& net, const ParamStore& params, const Matrix& x,
                           const DomainMask& mask, std::span<const int> labels,
                           const LossWeights& w) {
  const ForwardTrace trace = net.forward(params, x, mask, ForwardMode::Train);
  const LossBreakdown loss = total_loss(trace.logits, labels, mask, trace.sparse_total, params, w);
  return {loss.total, net.kink_signature(trace)};
}

}  // namespace

GradCheckResult check_gradients(const Network& net, const ParamStore& params, const Matrix& x,
                                const DomainMask& mask, std::span<const int> labels,
                                const LossWeights& weights, double step) {
  ParamStore work = params;
  const ForwardTrace trace = net.forward(work, x, mask, ForwardMode::Train);
  const LossBreakdown loss =
      total_loss(trace.logits, labels, mask, trace.sparse_total, work, weights);
  net.backward(work, trace, loss.d_logits, weights.sparse);
  std::vector<double> analytic = work.grads;
  for (const auto& slot : work.decayed) {
    for (std::size_t i = slot.offset; i < slot.offset + slot.size; ++i) {
      analytic[i] += weights.weight_decay * work.values[i];
    }
  }
  const auto base_sig = net.kink_signature(trace);

  GradCheckResult res;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double orig = work.values[i];
    work.values[i] = orig + step;
    const ObjectiveEval plus = objective_at(net, work, x, mask, labels, weights);
    work.values[i] = orig - step;
    const ObjectiveEval minus = objective_at(net, work, x, mask, labels, weights);
    work.values[i] = orig;
    if (plus.signature != base_sig || minus.signature != base_sig) {
      ++res.skipped;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * step);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), kGradCheckFloor});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - analytic[i]) / denom);
    ++res.checked;
  }
  return res;
}

std::vector<GradCheckEntry> grad_check(const ExperimentConfig& config, const DomainDataset& data,
                                       double tolerance) {
  data.validate();
  ExperimentConfig cfg = config;
  // Small enough that central differences over every parameter stay cheap.
  cfg.hidden = {8, 6};
  cfg.entropy_on = true;

  std::vector<std::pair<std::string, std::optional<ReferenceVariant>>> cases{
      {"normal_ml", ReferenceVariant::normal_ml()},
      {"normal_map", ReferenceVariant::normal_map(config.epsilon)},
      {"laplace_ml", ReferenceVariant::laplace_ml()},
      {"none", std::nullopt},
  };
  std::vector<GradCheckEntry> out;
  for (const auto& [name, variant] : cases) {
    cfg.variant = variant;
    const auto arch = make_architecture(cfg, data.feature_dim(), data.classes);
    const auto [net, params] = Network::build(arch, derive_seed(cfg.seed, kInit));
    const BatchPlan plan =
        compose_batches(data.source_count(), data.target_count(), cfg.batch,
                        derive_seed(cfg.seed, kBatches), cfg.min_rows_per_domain());
    const Batch batch = plan.epoch(0).front();
    const Matrix x = vstack(data.source_x.select_rows(batch.source_idx),
                            data.target_x.select_rows(batch.target_idx));
    std::vector<int> labels;
    for (std::size_t i : batch.source_idx) labels.push_back(data.source_y[i]);
    labels.resize(x.rows(), -1);
    const LossWeights w{cfg.effective_lambda(), cfg.lambda_sparse, cfg.wd};

    GradCheckEntry e;
    e.name = name;
    e.result = check_gradients(net, params, x, batch.mask(), labels, w);
    e.passed = e.result.max_rel_error <= tolerance;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace dial
