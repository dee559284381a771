#include "dial/align.hpp"

#include <cmath>

#include "dial/error.hpp"

namespace dial {

ReferenceVariant ReferenceVariant::normal_map(double epsilon) {
  if (!(epsilon >= 0.0)) {
    throw Error(ErrorCode::BadSpec, "NormalMAP epsilon must be nonnegative");
  }
  return {ReferenceKind::NormalMAP, epsilon};
}

std::string ReferenceVariant::name() const {
  switch (kind) {
    case ReferenceKind::NormalML: return "normal_ml";
    case ReferenceKind::NormalMAP: return "normal_map";
    case ReferenceKind::LaplaceML: return "laplace_ml";
  }
  return "unknown";
}

ReferenceVariant ReferenceVariant::parse(const std::string& name, double epsilon) {
  if (name == "normal_ml") return normal_ml();
  if (name == "normal_map") return normal_map(epsilon);
  if (name == "laplace_ml") return laplace_ml();
  throw Error(ErrorCode::BadSpec, "unknown reference variant '" + name + "'");
}

void check_nondegenerate(const AlignParams& params) {
  for (std::size_t c = 0; c < params.a.size(); ++c) {
    if (!(params.a[c] >= kMinSquaredScale)) {
      throw Error(ErrorCode::DegenerateChannel,
                  "channel " + std::to_string(c) + " has squared scale " +
                      std::to_string(params.a[c]));
    }
  }
}

AlignParams estimate(const ReferenceVariant& variant, const Matrix& x) {
  if (x.rows() == 0) throw Error(ErrorCode::EmptyInput, "cannot estimate from zero rows");
  AlignParams p;
  p.variant = variant;
  switch (variant.kind) {
    case ReferenceKind::NormalML:
    case ReferenceKind::NormalMAP: {
      auto m = column_mean_var(x);
      p.b = std::move(m.mean);
      p.a = std::move(m.var);
      if (variant.kind == ReferenceKind::NormalMAP) {
        for (auto& a : p.a) a += variant.epsilon;
      }
      break;
    }
    case ReferenceKind::LaplaceML: {
      auto r = column_median_mad(x);
      p.b = std::move(r.median);
      p.a.resize(r.mad.size());
      for (std::size_t c = 0; c < r.mad.size(); ++c) p.a[c] = r.mad[c] * r.mad[c];
      break;
    }
  }
  check_nondegenerate(p);
  return p;
}

namespace {

void check_shape(const AlignParams& params, const Matrix& x) {
  if (params.a.size() != params.b.size() || x.cols() != params.channels()) {
    throw Error(ErrorCode::ShapeMismatch,
                "input has " + std::to_string(x.cols()) + " channels, params have " +
                    std::to_string(params.channels()));
  }
}

}  // namespace

Matrix apply(const AlignParams& params, const Matrix& x) {
  check_shape(params, x);
  check_nondegenerate(params);
  Matrix out(x.rows(), x.cols());
  std::vector<double> scale(params.channels());
  for (std::size_t c = 0; c < scale.size(); ++c) scale[c] = std::sqrt(params.a[c]);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(i, c) = (x(i, c) - params.b[c]) / scale[c];
    }
  }
  return out;
}

Matrix invert(const AlignParams& params, const Matrix& v) {
  check_shape(params, v);
  check_nondegenerate(params);
  Matrix out(v.rows(), v.cols());
  std::vector<double> scale(params.channels());
  for (std::size_t c = 0; c < scale.size(); ++c) scale[c] = std::sqrt(params.a[c]);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    for (std::size_t c = 0; c < v.cols(); ++c) {
      out(i, c) = v(i, c) * scale[c] + params.b[c];
    }
  }
  return out;
}

InverseGamma variance_posterior(std::size_t n, double epsilon, double sample_var) {
  const double half_n = static_cast<double>(n) / 2.0;
  const InverseGamma prior{half_n - 1.0, epsilon * half_n};
  return {prior.alpha + half_n, prior.beta + half_n * sample_var};
}

}  // namespace dial
