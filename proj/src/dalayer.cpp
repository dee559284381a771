#include "dial/dalayer.hpp"

#include <cmath>
#include <string>

#include "dial/error.hpp"

namespace dial {

const char* to_string(Domain d) { return d == Domain::Source ? "source" : "target"; }

DomainMask uniform_mask(std::size_t rows, Domain d) { return DomainMask(rows, d); }

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

DaLayer::DaLayer(std::size_t width, ReferenceVariant variant, double sparse_weight)
    : width_(width), variant_(variant), sparse_weight_(sparse_weight) {
  if (width == 0) throw Error(ErrorCode::BadArchitecture, "DA-layer width must be positive");
  if (!(sparse_weight >= 0.0)) {
    throw Error(ErrorCode::BadArchitecture, "sparse weight must be nonnegative");
  }
  if (variant.kind == ReferenceKind::NormalMAP && !(variant.epsilon >= 0.0)) {
    throw Error(ErrorCode::BadArchitecture, "NormalMAP epsilon must be nonnegative");
  }
}

DaForward DaLayer::forward_train(const Matrix& x, const DomainMask& mask) const {
  if (mode_ != DaMode::Train) {
    throw Error(ErrorCode::MissingFrozenParams, "forward_train called on a frozen DA-layer");
  }
  if (x.cols() != width_) {
    throw Error(ErrorCode::ShapeMismatch, "DA-layer width " + std::to_string(width_) +
                                              ", input has " + std::to_string(x.cols()));
  }
  if (mask.size() != x.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "domain mask length does not match batch rows");
  }

  DaForward out;
  DaCache& cache = out.cache;
  cache.rows = x.rows();
  cache.cols = x.cols();
  cache.sparse_weight = sparse_weight_;
  cache.centered = Matrix(x.rows(), x.cols());
  out.output = Matrix(x.rows(), x.cols());

  for (std::size_t i = 0; i < mask.size(); ++i) cache.rows_of[index_of(mask[i])].push_back(i);

  double abs_sum = 0.0;
  for (Domain d : kDomains) {
    const std::size_t di = index_of(d);
    const auto& idx = cache.rows_of[di];
    if (idx.empty()) continue;
    if (idx.size() < variant_.min_rows()) {
      throw Error(ErrorCode::InsufficientDomainSamples,
                  std::string(to_string(d)) + " domain has " + std::to_string(idx.size()) +
                      " rows, " + variant_.name() + " needs " +
                      std::to_string(variant_.min_rows()));
    }
    const Matrix xd = x.select_rows(idx);
    AlignParams p = estimate(variant_, xd);

    auto& scale = cache.scale[di];
    scale.resize(width_);
    for (std::size_t c = 0; c < width_; ++c) scale[c] = std::sqrt(p.a[c]);

    if (variant_.kind == ReferenceKind::LaplaceML) {
      auto& mid = cache.middle[di];
      mid.reserve(width_);
      for (std::size_t c = 0; c < width_; ++c) {
        const auto col = xd.column_values(c);
        mid.push_back(middle_positions(col));
      }
    }

    for (std::size_t r : idx) {
      for (std::size_t c = 0; c < width_; ++c) {
        const double centered = x(r, c) - p.b[c];
        cache.centered(r, c) = centered;
        out.output(r, c) = centered / scale[c];
        abs_sum += std::abs(centered);
      }
    }
    cache.params[di] = std::move(p);
  }

  out.penalty = x.rows() == 0 ? 0.0 : sparse_weight_ * abs_sum / static_cast<double>(x.rows());
  return out;
}

Matrix DaLayer::backward(const DaCache& cache, const Matrix& dy, double d_penalty) const {
  if (dy.rows() != cache.rows || dy.cols() != cache.cols || cache.cols != width_ ||
      cache.centered.rows() != cache.rows) {
    throw Error(ErrorCode::StaleCache, "gradient shape does not match the cached batch");
  }
  Matrix dx(cache.rows, cache.cols);
  const double k_pen = cache.rows == 0
                           ? 0.0
                           : d_penalty * cache.sparse_weight / static_cast<double>(cache.rows);

  for (Domain d : kDomains) {
    const std::size_t di = index_of(d);
    const auto& idx = cache.rows_of[di];
    if (idx.empty()) continue;
    const double n = static_cast<double>(idx.size());

    for (std::size_t c = 0; c < width_; ++c) {
      const double s = cache.scale[di][c];
      double sum_dy = 0.0;
      double sum_dy_xc = 0.0;
      double sum_sign = 0.0;
      for (std::size_t r : idx) {
        const double xc = cache.centered(r, c);
        sum_dy += dy(r, c);
        sum_dy_xc += dy(r, c) * xc;
        sum_sign += sign(xc);
      }

      if (variant_.kind == ReferenceKind::LaplaceML) {
        // y = (x - median) / mad. The median moves with its middle
        // element(s), weight w; the mad moves with sign(x - median).
        const MiddleRanks mid = cache.middle[di][c];
        for (std::size_t k = 0; k < idx.size(); ++k) {
          const std::size_t r = idx[k];
          double w = 0.0;
          if (k == mid.lower) w += 0.5;
          if (k == mid.upper) w += 0.5;
          const double dmad = sign(cache.centered(r, c)) - w * sum_sign;  // times 1/n
          dx(r, c) = (dy(r, c) - w * sum_dy) / s - sum_dy_xc * dmad / (n * s * s) +
                     k_pen * dmad;
        }
      } else {
        // y = (x - mean) / sqrt(var + eps).
        const double mean_dy = sum_dy / n;
        const double mean_dy_xc = sum_dy_xc / n;
        const double mean_sign = sum_sign / n;
        const double s3 = s * s * s;
        for (std::size_t r : idx) {
          const double xc = cache.centered(r, c);
          dx(r, c) = (dy(r, c) - mean_dy) / s - xc * mean_dy_xc / s3 +
                     k_pen * (sign(xc) - mean_sign);
        }
      }
    }
  }
  return dx;
}

void DaLayer::freeze(Domain domain, AlignParams params) {
  if (params.channels() != width_ || params.a.size() != width_) {
    throw Error(ErrorCode::ShapeMismatch, "frozen params have " +
                                              std::to_string(params.channels()) +
                                              " channels, layer width is " +
                                              std::to_string(width_));
  }
  frozen_[index_of(domain)] = std::move(params);
}

void DaLayer::set_mode(DaMode mode) {
  if (mode == DaMode::Frozen && !frozen_[index_of(Domain::Target)]) {
    throw Error(ErrorCode::MissingFrozenParams, "frozen mode requires target parameters");
  }
  mode_ = mode;
}

Matrix DaLayer::forward_frozen(const Matrix& x, Domain domain) const {
  if (mode_ != DaMode::Frozen) {
    throw Error(ErrorCode::MissingFrozenParams, "DA-layer is not in frozen mode");
  }
  const auto& p = frozen_[index_of(domain)];
  if (!p) {
    throw Error(ErrorCode::MissingFrozenParams,
                std::string("no frozen parameters for the ") + to_string(domain) + " domain");
  }
  return apply(*p, x);
}

}  // namespace dial
