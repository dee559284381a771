#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace dial {

// Dense row-major matrix of doubles. Rows are samples, columns are channels.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Takes ownership of `data`; throws ShapeMismatch on a size mismatch and
  // NonFiniteValue if any entry is NaN or infinite.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::initializer_list<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  std::vector<double> column_values(std::size_t c) const;

  // Gathers the listed rows, in order, into a new matrix.
  Matrix select_rows(std::span<const std::size_t> indices) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Stacks `bottom` under `top`; both must have the same column count.
Matrix vstack(const Matrix& top, const Matrix& bottom);

struct ColumnMoments {
  std::vector<double> mean;
  std::vector<double> var;  // 1/N normalization
};

struct ColumnRobust {
  std::vector<double> median;
  std::vector<double> mad;  // mean absolute deviation from the median
};

ColumnMoments column_mean_var(const Matrix& x);
ColumnRobust column_median_mad(const Matrix& x);

// Positions of the middle order statistic(s) of `values`: both entries equal
// for odd length, the lower and upper middle element for even length.
struct MiddleRanks {
  std::size_t lower;
  std::size_t upper;
};
MiddleRanks middle_positions(std::span<const double> values);

Matrix softmax_rows(const Matrix& z);
Matrix log_softmax_rows(const Matrix& z);

// Seeded random stream. The engine is std::mt19937_64, whose output sequence
// is fixed by the standard; the distributions below are implemented here
// rather than with <random>'s distributions, whose algorithms are
// implementation-defined, so draws are identical across toolchains.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();
  double standard_normal();
  // Uniform integer in [0, n); n > 0.
  std::size_t below(std::size_t n);

  Matrix standard_normal(std::size_t rows, std::size_t cols);
  Matrix uniform01(std::size_t rows, std::size_t cols);
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a base seed with a stream id so independent consumers (init, batching,
// data generation) get uncorrelated streams from one configured seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace dial
