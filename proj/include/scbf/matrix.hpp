#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace scbf {

// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  // Copies of selected rows, in the given order.
  DenseMatrix gather_rows(std::span<const std::size_t> indices) const;

  DenseMatrix without_column(std::size_t col) const;
  DenseMatrix without_row(std::size_t row) const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out = a * b. Throws ShapeError with `context` in the message on mismatch.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b,
                   const std::string& context = "matmul");

// out = a^T * b
DenseMatrix matmul_transpose_a(const DenseMatrix& a, const DenseMatrix& b);

// out = a * b^T
DenseMatrix matmul_transpose_b(const DenseMatrix& a, const DenseMatrix& b);

std::string shape_string(const DenseMatrix& m);

bool all_finite(const DenseMatrix& m);

}  // namespace scbf
