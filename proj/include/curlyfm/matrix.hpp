#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace curlyfm {

/// Dense row-major matrix of doubles. Batches of points are stored one point per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

  Matrix transposed() const;
  /// Rows picked by index, in the given order.
  Matrix select_rows(std::span<const std::size_t> idx) const;
  /// Columns [begin, begin + count).
  Matrix col_block(std::size_t begin, std::size_t count) const;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Horizontal concatenation; all blocks must have the same row count.
Matrix hconcat(std::span<const Matrix* const> blocks);
/// Vertical concatenation; all blocks must have the same column count.
Matrix vconcat(std::span<const Matrix* const> blocks);

double squared_distance(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace curlyfm
