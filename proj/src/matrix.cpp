#include "scbf/matrix.hpp"

#include <cmath>
#include <utility>

#include "scbf/errors.hpp"

namespace scbf {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows_) + "x" +
                     std::to_string(cols_));
  }
}

DenseMatrix DenseMatrix::gather_rows(std::span<const std::size_t> indices) const {
  DenseMatrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ShapeError("gather_rows: row index out of range");
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

DenseMatrix DenseMatrix::without_column(std::size_t col) const {
  if (col >= cols_) throw ShapeError("without_column: column out of range");
  DenseMatrix out(rows_, cols_ - 1);
  for (std::size_t r = 0; r < rows_; ++r) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < cols_; ++c) {
      if (c != col) out(r, k++) = (*this)(r, c);
    }
  }
  return out;
}

DenseMatrix DenseMatrix::without_row(std::size_t row_index) const {
  if (row_index >= rows_) throw ShapeError("without_row: row out of range");
  DenseMatrix out(rows_ - 1, cols_);
  std::size_t k = 0;
  for (std::size_t r = 0; r < rows_; ++r) {
    if (r == row_index) continue;
    auto src = row(r);
    std::copy(src.begin(), src.end(), out.row(k++).begin());
  }
  return out;
}

std::string shape_string(const DenseMatrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b,
                   const std::string& context) {
  if (a.cols() != b.rows()) {
    throw ShapeError(context + ": cannot multiply " + shape_string(a) + " by " +
                     shape_string(b));
  }
  DenseMatrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out_row = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* b_row = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

DenseMatrix matmul_transpose_a(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_transpose_a: cannot multiply (" + shape_string(a) +
                     ")^T by " + shape_string(b));
  }
  DenseMatrix out(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* b_row = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* out_row = out.row(i).data();
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

DenseMatrix matmul_transpose_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transpose_b: cannot multiply " + shape_string(a) +
                     " by (" + shape_string(b) + ")^T");
  }
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* a_row = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* b_row = b.row(j).data();
      double sum = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) sum += a_row[k] * b_row[k];
      out(i, j) = sum;
    }
  }
  return out;
}

bool all_finite(const DenseMatrix& m) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace scbf
