#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dial/dalayer.hpp"
#include "dial/numcore.hpp"

namespace dial {

// Labeled source sample plus unlabeled target sample. Target labels, when
// known, are kept for evaluation only; training code reads target_x alone.
struct DomainDataset {
  Matrix source_x;
  std::vector<int> source_y;
  Matrix target_x;
  std::optional<std::vector<int>> target_y;
  std::size_t classes = 0;

  std::size_t feature_dim() const noexcept { return source_x.cols(); }
  std::size_t source_count() const noexcept { return source_x.rows(); }
  std::size_t target_count() const noexcept { return target_x.rows(); }

  // Throws BadSpec when an invariant is violated.
  void validate() const;
};

struct ShiftSpec {
  double rotation_deg = 0.0;  // applied to the first two dimensions
  double scale = 1.0;
  std::vector<double> translation;  // empty means zero
  double label_noise = 0.0;         // probability of replacing a target label

  static ShiftSpec identity() { return {}; }
};

// K unit-variance Gaussian clusters with centers on a radius-5 circle in the
// first two dimensions. The target sample is drawn from the same law and then
// rotated, scaled and translated; each target label is replaced by a
// different class with probability label_noise.
DomainDataset gen_blobs(std::size_t classes, std::size_t dim, std::size_t n, std::size_t m,
                        const ShiftSpec& shift, std::uint64_t seed);

// Two interleaved half circles (K = 2) with Gaussian noise; the target
// sample is rotated about the centroid of the generating law.
DomainDataset gen_moons(std::size_t n, std::size_t m, double rotation_deg, double noise_sd,
                        std::uint64_t seed);

// Rotates the first two coordinates of every row by `deg` about (cx, cy).
void rotate_about(Matrix& x, double deg, double cx, double cy);

inline constexpr double kMoonsCenterX = 0.5;
inline constexpr double kMoonsCenterY = 0.25;

// CSV: header `domain,label,f0,...,f{d-1}`, one sample per row, label -1 for
// unlabeled. Rows keep file order within each domain.
DomainDataset load_csv(const std::string& path);
DomainDataset parse_csv(const std::string& text);
void save_csv(const DomainDataset& ds, const std::string& path);
std::string to_csv(const DomainDataset& ds);

struct BatchMode {
  enum class Kind { Proportional, Fixed };
  Kind kind = Kind::Proportional;
  std::size_t batch_size = 32;  // Proportional
  std::size_t n_source = 32;    // Fixed
  std::size_t n_target = 16;    // Fixed

  static BatchMode proportional(std::size_t b) { return {Kind::Proportional, b, 0, 0}; }
  static BatchMode fixed(std::size_t ns, std::size_t nt) { return {Kind::Fixed, 0, ns, nt}; }
};

struct Batch {
  std::vector<std::size_t> source_idx;
  std::vector<std::size_t> target_idx;

  // Source rows first, then target rows.
  DomainMask mask() const;
};

// Per-batch domain counts plus a seed; epochs are materialized on demand and
// depend only on (seed, epoch). One epoch is one pass over the source set.
class BatchPlan {
 public:
  BatchPlan(std::size_t n, std::size_t m, std::size_t per_batch_source,
            std::size_t per_batch_target, std::uint64_t seed);

  std::size_t source_per_batch() const noexcept { return per_source_; }
  std::size_t target_per_batch() const noexcept { return per_target_; }
  std::size_t batches_per_epoch() const noexcept;

  // Each domain is drawn from fresh shuffles started at the epoch boundary,
  // so within an epoch no index repeats before all indices have appeared.
  std::vector<Batch> epoch(std::size_t e) const;

 private:
  std::size_t n_;
  std::size_t m_;
  std::size_t per_source_;
  std::size_t per_target_;
  std::uint64_t seed_;
};

// Proportional: per batch n_src = round_half_up(B * n / (n + m)), n_tgt = B - n_src.
// Throws InsufficientDomainSamples if either count is below `min_per_domain`.
BatchPlan compose_batches(std::size_t n, std::size_t m, const BatchMode& mode,
                          std::uint64_t seed, std::size_t min_per_domain = 2);

}  // namespace dial
