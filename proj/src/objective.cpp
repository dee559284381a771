#include "dial/objective.hpp"

#include <cmath>
#include <string>

#include "dial/error.hpp"

namespace dial {

namespace {

void check_mask(const Matrix& logits, const DomainMask& mask) {
  if (mask.size() != logits.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "domain mask length does not match logits rows");
  }
}

}  // namespace

LossTerm source_cross_entropy(const Matrix& logits, std::span<const int> labels,
                              const DomainMask& mask) {
  check_mask(logits, mask);
  if (labels.size() != logits.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "label count does not match logits rows");
  }
  const std::size_t k = logits.cols();
  LossTerm term;
  term.grad = Matrix(logits.rows(), k);

  std::size_t n_src = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != Domain::Source) continue;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw Error(ErrorCode::MissingLabel,
                  "source row " + std::to_string(i) + " has label " + std::to_string(labels[i]));
    }
    ++n_src;
  }
  if (n_src == 0) {
    term.no_rows = true;
    return term;
  }

  const Matrix logp = log_softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(n_src);
  double sum = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != Domain::Source) continue;
    const auto y = static_cast<std::size_t>(labels[i]);
    sum -= logp(i, y);
    auto g = term.grad.row(i);
    for (std::size_t c = 0; c < k; ++c) g[c] = std::exp(logp(i, c)) * inv_n;
    g[y] -= inv_n;
  }
  term.value = sum * inv_n;
  return term;
}

LossTerm target_entropy(const Matrix& logits, const DomainMask& mask) {
  check_mask(logits, mask);
  const std::size_t k = logits.cols();
  LossTerm term;
  term.grad = Matrix(logits.rows(), k);

  std::size_t n_tgt = 0;
  for (Domain d : mask) n_tgt += d == Domain::Target ? 1 : 0;
  if (n_tgt == 0) {
    term.no_rows = true;
    return term;
  }

  const Matrix logp = log_softmax_rows(logits);
  const double inv_m = 1.0 / static_cast<double>(n_tgt);
  double sum = 0.0;
  std::vector<double> p(k);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != Domain::Target) continue;
    double h = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      p[c] = std::exp(logp(i, c));
      // p log p -> 0 as p -> 0; an underflowed p contributes exactly 0.
      if (p[c] > 0.0) h -= p[c] * logp(i, c);
    }
    sum += h;
    // dH/dz_c = -p_c (log p_c + H)
    auto g = term.grad.row(i);
    for (std::size_t c = 0; c < k; ++c) {
      g[c] = p[c] > 0.0 ? -p[c] * (logp(i, c) + h) * inv_m : 0.0;
    }
  }
  term.value = sum * inv_m;
  return term;
}

LossBreakdown total_loss(const Matrix& logits, std::span<const int> labels,
                         const DomainMask& mask, double sparse_total, const ParamStore& params,
                         const LossWeights& weights) {
  if (!(weights.entropy >= 0.0) || !(weights.sparse >= 0.0) || !(weights.weight_decay >= 0.0)) {
    throw Error(ErrorCode::BadSpec, "loss weights must be nonnegative");
  }
  LossTerm ce = source_cross_entropy(logits, labels, mask);
  LossTerm ent = target_entropy(logits, mask);

  LossBreakdown out;
  out.source_ce = ce.value;
  out.no_source_rows = ce.no_rows;
  out.target_entropy = ent.value;
  out.sparse = sparse_total;
  out.weight_decay = param_sq_norm(params);
  out.total = out.source_ce + weights.entropy * out.target_entropy +
              weights.sparse * out.sparse + 0.5 * weights.weight_decay * out.weight_decay;

  out.d_logits = std::move(ce.grad);
  if (weights.entropy != 0.0) {
    auto d = out.d_logits.values();
    const auto e = ent.grad.values();
    for (std::size_t t = 0; t < d.size(); ++t) d[t] += weights.entropy * e[t];
  }
  return out;
}

}  // namespace dial
