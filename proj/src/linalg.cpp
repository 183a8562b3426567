#include "rlp/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace rlp {

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  const double* pa = a.data();
  const double* pb = b.data();
  const long n = static_cast<long>(a.size());
  double s = 0;
#pragma omp simd reduction(+ : s)
  for (long i = 0; i < n; ++i) s += pa[i] * pb[i];
  return s;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions disagree");
  Matrix c(a.rows(), b.cols());
  // ikj order: the inner loop streams contiguous rows of b and c.
  for (int i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto bk = b.row(k);
      for (int j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

double trace(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("trace: matrix is not square");
  double s = 0;
  for (int i = 0; i < m.rows(); ++i) s += m(i, i);
  return s;
}

double frobenius_norm(const Matrix& m) {
  double s = 0;
  for (double v : m.flat()) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const Matrix& m) {
  for (double v : m.flat())
    if (!std::isfinite(v)) return false;
  return true;
}

double vec_norm2(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace rlp
