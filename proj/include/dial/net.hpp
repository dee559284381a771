#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dial/align.hpp"
#include "dial/dalayer.hpp"
#include "dial/numcore.hpp"

namespace dial {

struct LayerSpec {
  enum class Kind { Dense, Relu, DaLayer };

  Kind kind = Kind::Relu;
  std::size_t in = 0;   // Dense only
  std::size_t out = 0;  // Dense only
  ReferenceVariant variant;    // DaLayer only
  double sparse_weight = 1.0;  // DaLayer only; 0 disables the penalty
  bool affine = false;         // DaLayer only; learnable scale/shift after alignment

  static LayerSpec dense(std::size_t in, std::size_t out) {
    return {Kind::Dense, in, out, {}, 0.0, false};
  }
  static LayerSpec relu() { return {Kind::Relu, 0, 0, {}, 0.0, false}; }
  static LayerSpec dalayer(ReferenceVariant variant, double sparse_weight = 1.0,
                           bool affine = false) {
    return {Kind::DaLayer, 0, 0, variant, sparse_weight, affine};
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// d -> hidden... -> classes, with a DA-layer after every dense layer
// (classifier head included) when `variant` is set.
std::vector<LayerSpec> dial_architecture(std::size_t input_dim, std::size_t classes,
                                         const std::vector<std::size_t>& hidden,
                                         std::optional<ReferenceVariant> variant,
                                         double sparse_weight = 1.0);

struct ParamSlot {
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Flat parameter vector with a gradient buffer of the same length.
// `decayed` lists the dense weight matrices, the only entries weight decay
// touches.
struct ParamStore {
  std::vector<double> values;
  std::vector<double> grads;
  std::vector<ParamSlot> decayed;

  std::size_t size() const noexcept { return values.size(); }
  void zero_grads() { std::fill(grads.begin(), grads.end(), 0.0); }

  std::span<double> view(ParamSlot s) { return {values.data() + s.offset, s.size}; }
  std::span<const double> view(ParamSlot s) const { return {values.data() + s.offset, s.size}; }
  std::span<double> grad(ParamSlot s) { return {grads.data() + s.offset, s.size}; }
};

// Sum of squared dense weights; biases and affine parameters are excluded.
double param_sq_norm(const ParamStore& params);

enum class ForwardMode { Train, FrozenSource, FrozenTarget };

struct LayerTrace {
  Matrix input;
  std::optional<DaCache> da;
  Matrix aligned;  // DA-layer output before the affine step (affine layers only)
};

struct ForwardTrace {
  ForwardMode mode = ForwardMode::Train;
  std::vector<LayerTrace> layers;
  std::vector<double> penalties;  // per layer, 0 for non-DA layers
  Matrix logits;
  double sparse_total = 0.0;
};

class Network {
 public:
  // Validates the architecture and draws dense weights from N(0, 2/fan_in);
  // biases start at 0, affine scales at 1.
  static std::pair<Network, ParamStore> build(std::vector<LayerSpec> arch, std::uint64_t seed);

  const std::vector<LayerSpec>& architecture() const noexcept { return arch_; }
  std::size_t input_width() const noexcept { return input_width_; }
  std::size_t class_count() const noexcept { return output_width_; }
  std::size_t param_count() const noexcept { return param_count_; }

  // Train mode needs one mask entry per row; frozen modes ignore the mask.
  ForwardTrace forward(const ParamStore& params, const Matrix& x, const DomainMask& mask,
                       ForwardMode mode) const;

  // Overwrites params.grads with d(<dLogits, logits> + d_sparse * sparse_total)/d(theta).
  void backward(ParamStore& params, const ForwardTrace& trace, const Matrix& d_logits,
                double d_sparse) const;

  // Argmax per row, ties to the lowest class index.
  std::vector<int> predict(const ParamStore& params, const Matrix& x, ForwardMode mode) const;

  // Indices (into architecture()) of the DA-layers.
  std::vector<std::size_t> da_layer_indices() const;
  DaLayer& da_layer(std::size_t layer_index);
  const DaLayer& da_layer(std::size_t layer_index) const;
  bool has_da_layers() const;

  void set_da_mode(DaMode mode);

  // Encodes every non-smooth branch a train-mode pass took: ReLU activity,
  // the sign of each centered DA feature, and which rows supplied each
  // median. Two points with equal signatures lie on the same smooth piece.
  std::vector<std::int64_t> kink_signature(const ForwardTrace& trace) const;

 private:
  struct Layer {
    LayerSpec spec;
    std::size_t width = 0;  // output width
    ParamSlot weight;
    ParamSlot bias;
    ParamSlot gamma;  // affine DA-layers
    ParamSlot beta;
    std::optional<DaLayer> da;
  };

  std::vector<LayerSpec> arch_;
  std::vector<Layer> layers_;
  std::size_t input_width_ = 0;
  std::size_t output_width_ = 0;
  std::size_t param_count_ = 0;
};

std::vector<int> argmax_rows(const Matrix& logits);


// Text checkpoint: architecture, parameter values and frozen DA-layer
// parameters. Doubles are written in hexadecimal so save -> load is exact.
void save_checkpoint(const std::string& path, const Network& net, const ParamStore& params);
std::pair<Network, ParamStore> load_checkpoint(const std::string& path);
std::string checkpoint_to_string(const Network& net, const ParamStore& params);
std::pair<Network, ParamStore> checkpoint_from_string(const std::string& text);

}  // namespace dial
