#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "dial/align.hpp"
#include "dial/numcore.hpp"

namespace dial {

enum class Domain : std::uint8_t { Source = 0, Target = 1 };

inline constexpr std::array<Domain, 2> kDomains{Domain::Source, Domain::Target};

inline std::size_t index_of(Domain d) { return static_cast<std::size_t>(d); }
const char* to_string(Domain d);

// One tag per batch row.
using DomainMask = std::vector<Domain>;

DomainMask uniform_mask(std::size_t rows, Domain d);

enum class DaMode { Train, Frozen };

// Everything backward() needs from one forward_train() call.
struct DaCache {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double sparse_weight = 0.0;
  // Input minus its own domain's location, same layout as the batch.
  Matrix centered;
  std::array<std::vector<std::size_t>, 2> rows_of;
  std::array<std::optional<AlignParams>, 2> params;
  // sqrt(a) per channel, per domain.
  std::array<std::vector<double>, 2> scale;
  // LaplaceML only: per domain and channel, the positions (into rows_of[d])
  // of the middle order statistics the median was taken from.
  std::array<std::vector<MiddleRanks>, 2> middle;
};

struct DaForward {
  Matrix output;
  DaCache cache;
  double penalty = 0.0;
};

// Domain alignment layer: aligns source rows and target rows of a batch
// separately onto the same reference distribution.
class DaLayer {
 public:
  DaLayer(std::size_t width, ReferenceVariant variant, double sparse_weight = 0.0);

  std::size_t width() const noexcept { return width_; }
  const ReferenceVariant& variant() const noexcept { return variant_; }
  double sparse_weight() const noexcept { return sparse_weight_; }
  DaMode mode() const noexcept { return mode_; }

  // Estimates per-domain parameters on this batch and applies them.
  // penalty = sparse_weight * sum |x - b_domain| / rows.
  DaForward forward_train(const Matrix& x, const DomainMask& mask) const;

  // Exact gradient of <dY, Y> + d_penalty * penalty with respect to the
  // input, with the batch statistics treated as functions of the input.
  Matrix backward(const DaCache& cache, const Matrix& dy, double d_penalty) const;

  void freeze(Domain domain, AlignParams params);
  const std::optional<AlignParams>& frozen(Domain domain) const {
    return frozen_[index_of(domain)];
  }
  // Frozen mode requires stored target parameters.
  void set_mode(DaMode mode);

  Matrix forward_frozen(const Matrix& x, Domain domain) const;

 private:
  std::size_t width_;
  ReferenceVariant variant_;
  double sparse_weight_;
  DaMode mode_ = DaMode::Train;
  std::array<std::optional<AlignParams>, 2> frozen_;
};

}  // namespace dial
