#include "dial/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "dial/error.hpp"

namespace dial {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) {
    throw Error(ErrorCode::NonFiniteValue, "matrix fill value is not finite");
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::ShapeMismatch, "matrix data length " + std::to_string(data_.size()) +
                                              " != " + std::to_string(rows_) + "x" +
                                              std::to_string(cols_));
  }
  if (!all_finite()) {
    throw Error(ErrorCode::NonFiniteValue, "matrix contains NaN or Inf");
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw Error(ErrorCode::ShapeMismatch, "ragged row list");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::column(std::initializer_list<double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values));
}

std::vector<double> Matrix::column_values(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, c);
  return out;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = row(indices[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "vstack column mismatch");
  }
  Matrix out(top.rows() + bottom.rows(), top.cols());
  auto dst = out.values();
  std::copy(top.values().begin(), top.values().end(), dst.begin());
  std::copy(bottom.values().begin(), bottom.values().end(),
            dst.begin() + static_cast<std::ptrdiff_t>(top.size()));
  return out;
}

ColumnMoments column_mean_var(const Matrix& x) {
  if (x.rows() == 0) throw Error(ErrorCode::EmptyInput, "column_mean_var on zero rows");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  ColumnMoments m{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) m.mean[c] += x(i, c);
  }
  for (auto& v : m.mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      const double t = x(i, c) - m.mean[c];
      m.var[c] += t * t;
    }
  }
  for (auto& v : m.var) v /= static_cast<double>(n);
  return m;
}

MiddleRanks middle_positions(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Stable so tied values resolve to the earliest row.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  if (n % 2 == 1) return {order[n / 2], order[n / 2]};
  return {order[n / 2 - 1], order[n / 2]};
}

ColumnRobust column_median_mad(const Matrix& x) {
  if (x.rows() == 0) throw Error(ErrorCode::EmptyInput, "column_median_mad on zero rows");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  ColumnRobust r{std::vector<double>(d), std::vector<double>(d)};
  std::vector<double> col(n);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < n; ++i) col[i] = x(i, c);
    const auto mid = middle_positions(col);
    const double med = 0.5 * (col[mid.lower] + col[mid.upper]);
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i) dev += std::abs(x(i, c) - med);
    r.median[c] = med;
    r.mad[c] = dev / static_cast<double>(n);
  }
  return r;
}

Matrix log_softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto in = z.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (double v : in) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    auto o = out.row(i);
    for (std::size_t k = 0; k < in.size(); ++k) o[k] = in[k] - lse;
  }
  return out;
}

Matrix softmax_rows(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto in = z.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    auto o = out.row(i);
    double s = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      o[k] = std::exp(in[k] - mx);
      s += o[k];
    }
    for (auto& v : o) v /= s;
  }
  return out;
}

double RngStream::uniform01() {
  // 53 random mantissa bits -> [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::standard_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t RngStream::below(std::size_t n) {
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return static_cast<std::size_t>(v % range);
}

Matrix RngStream::standard_normal(std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = standard_normal();
  return m;
}

Matrix RngStream::uniform01(std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = uniform01();
  return m;
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(p[i - 1], p[below(i)]);
  }
  return p;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dial
