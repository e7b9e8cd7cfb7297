#include "curlyfm/matrix.hpp"

#include <cmath>

#include "curlyfm/errors.hpp"

namespace curlyfm {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw DimensionError("matrix data length does not match rows x cols");
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw DimensionError("ragged rows");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols_);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows_) throw DimensionError("row index out of range");
    const auto src = row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix Matrix::col_block(std::size_t begin, std::size_t count) const {
  if (begin + count > cols_) throw DimensionError("column block out of range");
  Matrix out(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = (*this)(r, begin + c);
  return out;
}

Matrix hconcat(std::span<const Matrix* const> blocks) {
  if (blocks.empty()) return {};
  const std::size_t rows = blocks.front()->rows();
  std::size_t cols = 0;
  for (const Matrix* b : blocks) {
    if (b->rows() != rows) throw DimensionError("hconcat: row counts differ");
    cols += b->cols();
  }
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.row(r).data();
    for (const Matrix* b : blocks) {
      const auto src = b->row(r);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return out;
}

Matrix vconcat(std::span<const Matrix* const> blocks) {
  if (blocks.empty()) return {};
  const std::size_t cols = blocks.front()->cols();
  std::vector<double> data;
  std::size_t rows = 0;
  for (const Matrix* b : blocks) {
    if (b->cols() != cols) throw DimensionError("vconcat: column counts differ");
    data.insert(data.end(), b->values().begin(), b->values().end());
    rows += b->rows();
  }
  return Matrix(rows, cols, std::move(data));
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace curlyfm
