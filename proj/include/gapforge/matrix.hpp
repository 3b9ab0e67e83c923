#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gapforge {

// Dense row-major matrix of doubles. Rows index the batch dimension.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> row(std::size_t r) { return {data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data() + r * cols_, cols_};
  }
  std::span<double> flat() { return {data(), data_.size()}; }
  std::span<const double> flat() const { return {data(), data_.size()}; }

  bool all_finite() const;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = A * B^T for A (n x k), B (m x k) -> (n x m). Both operands are read
// along contiguous rows, which is the layout the dense layers use.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// C = A * B for A (n x k), B (k x m) -> (n x m).
Matrix matmul_nn(const Matrix& a, const Matrix& b);

// C = A^T * B for A (n x k), B (n x m) -> (k x m).
Matrix matmul_tn(const Matrix& a, const Matrix& b);

std::vector<double> col_sum(const Matrix& a);
std::vector<double> col_mean(const Matrix& a);

}  // namespace gapforge
