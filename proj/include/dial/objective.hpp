#pragma once

#include <span>

#include "dial/dalayer.hpp"
#include "dial/net.hpp"
#include "dial/numcore.hpp"

namespace dial {

// A scalar loss term and its gradient with respect to the logits.
struct LossTerm {
  double value = 0.0;
  Matrix grad;
  // Set when the batch had no rows of the term's domain; value is then 0.
  bool no_rows = false;
};

// Mean negative log-likelihood over the batch's source rows. `labels` has one
// entry per row; target rows are ignored, source rows need a label in [0, K).
LossTerm source_cross_entropy(const Matrix& logits, std::span<const int> labels,
                              const DomainMask& mask);

// Mean prediction entropy over the batch's target rows.
LossTerm target_entropy(const Matrix& logits, const DomainMask& mask);

struct LossWeights {
  double entropy = 0.0;        // lambda
  double sparse = 0.0;         // lambda_sparse
  double weight_decay = 0.0;   // wd
};

struct LossBreakdown {
  double source_ce = 0.0;
  double target_entropy = 0.0;
  double sparse = 0.0;        // unweighted sum of DA-layer penalties
  double weight_decay = 0.0;  // unweighted sum of squared weights
  double total = 0.0;
  bool no_source_rows = false;
  // d(source_ce + lambda * target_entropy)/d(logits). The sparse and decay
  // terms are differentiated by the network backward and the optimizer.
  Matrix d_logits;
};

// total = source_ce + lambda * target_entropy + lambda_sparse * sparse
//         + (wd / 2) * |W|^2
LossBreakdown total_loss(const Matrix& logits, std::span<const int> labels,
                         const DomainMask& mask, double sparse_total, const ParamStore& params,
                         const LossWeights& weights);

}  // namespace dial
