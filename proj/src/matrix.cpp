#include "gapforge/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace gapforge {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.data() + i * k;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.data() + j * k;
      double acc = 0.0;
      // simd reduction picks a fixed lane order at compile time, so the
      // result is still deterministic for a given binary
#pragma omp simd reduction(+ : acc)
      for (std::size_t l = 0; l < k; ++l) acc += ar[l] * br[l];
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul_nn: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* cr = c.data() + i * m;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double v = a(i, k);
      const double* br = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) cr[j] += v * br[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn: inner dimensions differ");
  Matrix c(a.cols(), b.cols());
  const std::size_t m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* br = b.data() + i * m;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double v = a(i, j);
      double* cr = c.data() + j * m;
      for (std::size_t l = 0; l < m; ++l) cr[l] += v * br[l];
    }
  }
  return c;
}

std::vector<double> col_sum(const Matrix& a) {
  std::vector<double> s(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* r = a.data() + i * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) s[j] += r[j];
  }
  return s;
}

std::vector<double> col_mean(const Matrix& a) {
  std::vector<double> s = col_sum(a);
  for (double& v : s) v /= static_cast<double>(a.rows());
  return s;
}

}  // namespace gapforge
