#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dial/numcore.hpp"

namespace dial {

// Smallest admissible squared scale. Anything below is treated as a dead
// channel rather than divided by.
inline constexpr double kMinSquaredScale = 1e-12;

enum class ReferenceKind {
  NormalML,   // standard normal reference, ML estimate (batch normalization)
  NormalMAP,  // standard normal reference, Inverse-Gamma prior on the variance
  LaplaceML,  // standard Laplace reference, median / mean absolute deviation
};

struct ReferenceVariant {
  ReferenceKind kind = ReferenceKind::NormalML;
  double epsilon = 0.0;  // prior variance, NormalMAP only

  static ReferenceVariant normal_ml() { return {ReferenceKind::NormalML, 0.0}; }
  static ReferenceVariant normal_map(double epsilon);
  static ReferenceVariant laplace_ml() { return {ReferenceKind::LaplaceML, 0.0}; }

  // "normal_ml", "normal_map", "laplace_ml".
  std::string name() const;
  static ReferenceVariant parse(const std::string& name, double epsilon);

  // Minimum sample count for a well-defined estimate.
  std::size_t min_rows() const {
    return kind == ReferenceKind::NormalMAP && epsilon > 0.0 ? 1 : 2;
  }

  friend bool operator==(const ReferenceVariant&, const ReferenceVariant&) = default;
};

// Channel-wise transform u -> (u - b) / sqrt(a).
struct AlignParams {
  std::vector<double> a;  // squared scale, > 0
  std::vector<double> b;  // location
  ReferenceVariant variant;

  std::size_t channels() const noexcept { return b.size(); }

  friend bool operator==(const AlignParams&, const AlignParams&) = default;
};

// Fits the transform that maps the sample `x` onto the variant's reference:
//   NormalML   b = mean,   a = var
//   NormalMAP  b = mean,   a = var + epsilon
//   LaplaceML  b = median, a = mad^2 (so sqrt(a) is the Laplace scale)
// Throws EmptyInput on zero rows and DegenerateChannel if a < kMinSquaredScale.
AlignParams estimate(const ReferenceVariant& variant, const Matrix& x);

Matrix apply(const AlignParams& params, const Matrix& x);
Matrix invert(const AlignParams& params, const Matrix& v);

// Throws DegenerateChannel naming the first channel with a < kMinSquaredScale.
void check_nondegenerate(const AlignParams& params);

// Conjugate Inverse-Gamma update for a Gaussian variance with known mean.
struct InverseGamma {
  double alpha;
  double beta;

  double mode() const { return beta / (alpha + 1.0); }
};

// Prior with alpha = n/2 - 1 and beta = epsilon * n / 2, updated with n samples
// of variance `sample_var`. Its mode is (epsilon + sample_var) / 2, which is
// half of the squared scale NormalMAP uses.
InverseGamma variance_posterior(std::size_t n, double epsilon, double sample_var);

}  // namespace dial
