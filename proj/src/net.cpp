#include "dial/net.hpp"

#include <cmath>

#include "dial/error.hpp"

namespace dial {

std::vector<LayerSpec> dial_architecture(std::size_t input_dim, std::size_t classes,
                                         const std::vector<std::size_t>& hidden,
                                         std::optional<ReferenceVariant> variant,
                                         double sparse_weight) {
  std::vector<LayerSpec> arch;
  std::size_t width = input_dim;
  for (std::size_t h : hidden) {
    arch.push_back(LayerSpec::dense(width, h));
    if (variant) arch.push_back(LayerSpec::dalayer(*variant, sparse_weight));
    arch.push_back(LayerSpec::relu());
    width = h;
  }
  arch.push_back(LayerSpec::dense(width, classes));
  if (variant) arch.push_back(LayerSpec::dalayer(*variant, sparse_weight));
  return arch;
}

double param_sq_norm(const ParamStore& params) {
  double s = 0.0;
  for (const auto& slot : params.decayed) {
    for (double w : params.view(slot)) s += w * w;
  }
  return s;
}

std::pair<Network, ParamStore> Network::build(std::vector<LayerSpec> arch, std::uint64_t seed) {
  if (arch.empty()) throw Error(ErrorCode::BadArchitecture, "empty architecture");
  if (arch.front().kind != LayerSpec::Kind::Dense) {
    throw Error(ErrorCode::BadArchitecture, "the first layer must be dense");
  }

  Network net;
  ParamStore store;
  std::size_t width = 0;
  std::size_t offset = 0;
  auto reserve = [&](std::size_t n) {
    ParamSlot s{offset, n};
    offset += n;
    return s;
  };

  for (std::size_t k = 0; k < arch.size(); ++k) {
    const LayerSpec& spec = arch[k];
    Layer layer;
    layer.spec = spec;
    switch (spec.kind) {
      case LayerSpec::Kind::Dense:
        if (spec.in == 0 || spec.out == 0) {
          throw Error(ErrorCode::BadArchitecture, "dense layer with zero width");
        }
        if (k == 0) {
          net.input_width_ = spec.in;
        } else if (spec.in != width) {
          throw Error(ErrorCode::BadArchitecture,
                      "layer " + std::to_string(k) + " expects width " + std::to_string(spec.in) +
                          ", previous layer produces " + std::to_string(width));
        }
        layer.weight = reserve(spec.in * spec.out);
        layer.bias = reserve(spec.out);
        store.decayed.push_back(layer.weight);
        width = spec.out;
        break;
      case LayerSpec::Kind::Relu:
        break;
      case LayerSpec::Kind::DaLayer:
        layer.da.emplace(width, spec.variant, spec.sparse_weight);
        if (spec.affine) {
          layer.gamma = reserve(width);
          layer.beta = reserve(width);
        }
        break;
    }
    layer.width = width;
    net.layers_.push_back(std::move(layer));
  }

  // The classifier width is the last dense layer's output.
  net.output_width_ = width;
  if (width < 2) throw Error(ErrorCode::BadArchitecture, "need at least two classes");
  net.param_count_ = offset;
  net.arch_ = std::move(arch);

  store.values.assign(offset, 0.0);
  store.grads.assign(offset, 0.0);
  RngStream rng(derive_seed(seed, 0x1d1a1));
  for (auto& layer : net.layers_) {
    if (layer.spec.kind == LayerSpec::Kind::Dense) {
      const double sd = std::sqrt(2.0 / static_cast<double>(layer.spec.in));
      for (double& w : store.view(layer.weight)) w = sd * rng.standard_normal();
    } else if (layer.spec.kind == LayerSpec::Kind::DaLayer && layer.spec.affine) {
      for (double& g : store.view(layer.gamma)) g = 1.0;
    }
  }
  return {std::move(net), std::move(store)};
}

namespace {

// y = x W + b, W stored in x out row-major.
Matrix dense_forward(const Matrix& x, std::span<const double> w, std::span<const double> b,
                     std::size_t out) {
  const std::size_t in = x.cols();
  Matrix y(x.rows(), out);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto yr = y.row(i);
    std::copy(b.begin(), b.end(), yr.begin());
    const auto xr = x.row(i);
    for (std::size_t p = 0; p < in; ++p) {
      const double xv = xr[p];
      const double* wr = w.data() + p * out;
      for (std::size_t q = 0; q < out; ++q) yr[q] += xv * wr[q];
    }
  }
  return y;
}

}  // namespace

ForwardTrace Network::forward(const ParamStore& params, const Matrix& x, const DomainMask& mask,
                              ForwardMode mode) const {
  if (x.cols() != input_width_) {
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(x.cols()) +
                                              " features, network expects " +
                                              std::to_string(input_width_));
  }
  if (params.size() != param_count_) {
    throw Error(ErrorCode::ShapeMismatch, "parameter store does not match the network");
  }
  if (mode == ForwardMode::Train && mask.size() != x.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "train mode needs one domain tag per row");
  }

  ForwardTrace trace;
  trace.mode = mode;
  trace.layers.resize(layers_.size());
  trace.penalties.assign(layers_.size(), 0.0);

  Matrix h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& layer = layers_[k];
    LayerTrace& lt = trace.layers[k];
    switch (layer.spec.kind) {
      case LayerSpec::Kind::Dense: {
        Matrix y = dense_forward(h, params.view(layer.weight), params.view(layer.bias),
                                 layer.spec.out);
        lt.input = std::move(h);
        h = std::move(y);
        break;
      }
      case LayerSpec::Kind::Relu: {
        Matrix y = h;
        for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
        lt.input = std::move(h);
        h = std::move(y);
        break;
      }
      case LayerSpec::Kind::DaLayer: {
        Matrix y;
        if (mode == ForwardMode::Train) {
          DaForward f;
          try {
            f = layer.da->forward_train(h, mask);
          } catch (const Error& e) {
            throw Error(e.code(), "layer " + std::to_string(k) + ": " + e.message());
          }
          y = std::move(f.output);
          lt.da = std::move(f.cache);
          trace.penalties[k] = f.penalty;
          trace.sparse_total += f.penalty;
        } else {
          const Domain d = mode == ForwardMode::FrozenSource ? Domain::Source : Domain::Target;
          y = layer.da->forward_frozen(h, d);
        }
        if (layer.spec.affine) {
          const auto g = params.view(layer.gamma);
          const auto b = params.view(layer.beta);
          lt.aligned = y;
          for (std::size_t i = 0; i < y.rows(); ++i) {
            auto r = y.row(i);
            for (std::size_t c = 0; c < r.size(); ++c) r[c] = g[c] * r[c] + b[c];
          }
        }
        lt.input = std::move(h);
        h = std::move(y);
        break;
      }
    }
  }
  trace.logits = std::move(h);
  return trace;
}

void Network::backward(ParamStore& params, const ForwardTrace& trace, const Matrix& d_logits,
                       double d_sparse) const {
  if (trace.mode != ForwardMode::Train) {
    throw Error(ErrorCode::StaleCache, "backward needs a train-mode trace");
  }
  if (trace.layers.size() != layers_.size() || d_logits.rows() != trace.logits.rows() ||
      d_logits.cols() != trace.logits.cols()) {
    throw Error(ErrorCode::StaleCache, "trace does not match this network or gradient");
  }
  if (params.grads.size() != param_count_) {
    throw Error(ErrorCode::ShapeMismatch, "parameter store does not match the network");
  }
  params.zero_grads();

  Matrix g = d_logits;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Layer& layer = layers_[k];
    const LayerTrace& lt = trace.layers[k];
    switch (layer.spec.kind) {
      case LayerSpec::Kind::Dense: {
        const Matrix& x = lt.input;
        const std::size_t in = layer.spec.in;
        const std::size_t out = layer.spec.out;
        auto dw = params.grad(layer.weight);
        auto db = params.grad(layer.bias);
        const auto w = params.view(layer.weight);
        Matrix dx(x.rows(), in);
        for (std::size_t i = 0; i < x.rows(); ++i) {
          const auto gr = g.row(i);
          const auto xr = x.row(i);
          auto dxr = dx.row(i);
          for (std::size_t q = 0; q < out; ++q) db[q] += gr[q];
          for (std::size_t p = 0; p < in; ++p) {
            const double* wr = w.data() + p * out;
            double* dwr = dw.data() + p * out;
            double acc = 0.0;
            for (std::size_t q = 0; q < out; ++q) {
              dwr[q] += xr[p] * gr[q];
              acc += gr[q] * wr[q];
            }
            dxr[p] = acc;
          }
        }
        g = std::move(dx);
        break;
      }
      case LayerSpec::Kind::Relu: {
        const auto in = lt.input.values();
        auto gv = g.values();
        for (std::size_t t = 0; t < gv.size(); ++t) {
          if (!(in[t] > 0.0)) gv[t] = 0.0;
        }
        break;
      }
      case LayerSpec::Kind::DaLayer: {
        if (!lt.da) throw Error(ErrorCode::StaleCache, "missing DA-layer cache");
        if (layer.spec.affine) {
          const auto gam = params.view(layer.gamma);
          auto dgam = params.grad(layer.gamma);
          auto dbet = params.grad(layer.beta);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            auto gr = g.row(i);
            const auto ar = lt.aligned.row(i);
            for (std::size_t c = 0; c < gr.size(); ++c) {
              dgam[c] += gr[c] * ar[c];
              dbet[c] += gr[c];
              gr[c] *= gam[c];
            }
          }
        }
        g = layer.da->backward(*lt.da, g, d_sparse);
        break;
      }
    }
  }
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < r.size(); ++k) {
      if (r[k] > r[best]) best = k;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> Network::predict(const ParamStore& params, const Matrix& x,
                                  ForwardMode mode) const {
  if (mode == ForwardMode::Train) {
    throw Error(ErrorCode::MissingFrozenParams, "predict needs a frozen mode");
  }
  return argmax_rows(forward(params, x, {}, mode).logits);
}

std::vector<std::size_t> Network::da_layer_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].da) idx.push_back(k);
  }
  return idx;
}

DaLayer& Network::da_layer(std::size_t layer_index) {
  if (layer_index >= layers_.size() || !layers_[layer_index].da) {
    throw Error(ErrorCode::BadArchitecture, "layer " + std::to_string(layer_index) +
                                                " is not a DA-layer");
  }
  return *layers_[layer_index].da;
}

const DaLayer& Network::da_layer(std::size_t layer_index) const {
  return const_cast<Network*>(this)->da_layer(layer_index);
}

bool Network::has_da_layers() const { return !da_layer_indices().empty(); }

void Network::set_da_mode(DaMode mode) {
  for (auto& layer : layers_) {
    if (layer.da) layer.da->set_mode(mode);
  }
}

std::vector<std::int64_t> Network::kink_signature(const ForwardTrace& trace) const {
  std::vector<std::int64_t> sig;
  auto sgn = [](double v) -> std::int64_t { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); };
  for (std::size_t k = 0; k < layers_.size() && k < trace.layers.size(); ++k) {
    const LayerTrace& lt = trace.layers[k];
    if (layers_[k].spec.kind == LayerSpec::Kind::Relu) {
      for (double v : lt.input.values()) sig.push_back(v > 0.0 ? 1 : 0);
    } else if (lt.da) {
      for (double v : lt.da->centered.values()) sig.push_back(sgn(v));
      for (const auto& per_domain : lt.da->middle) {
        for (const auto& m : per_domain) {
          sig.push_back(static_cast<std::int64_t>(m.lower));
          sig.push_back(static_cast<std::int64_t>(m.upper));
        }
      }
    }
  }
  return sig;
}

}  // namespace dial
