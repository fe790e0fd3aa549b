#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "aelab/errors.hpp"

namespace aelab {

/// Dense row-major matrix of doubles.  Columns index batch points
/// throughout the library, so the inner (contiguous) dimension is the
/// batch dimension and elementwise kernels vectorize over it.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::size_t rows, std::size_t cols,
                          std::vector<double> data) {
    if (data.size() != rows * cols)
      throw ShapeError("Matrix::from_rows: data size " +
                       std::to_string(data.size()) + " != " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double> col(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void set_col(std::size_t c, const std::vector<double>& v) {
    if (v.size() != rows_) throw ShapeError("Matrix::set_col: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
  }

  bool finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// y += A * x for row-major operands, A is (r x k), x is (k x B).
/// Plain ikj loops; the contiguous inner dimension lets the compiler
/// vectorize, which is all the throughput this project needs.
inline void gemm_acc(double* y, const double* a, const double* x,
                     std::size_t r, std::size_t k, std::size_t b) {
  for (std::size_t i = 0; i < r; ++i) {
    double* yi = y + i * b;
    const double* ai = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double w = ai[l];
      const double* xl = x + l * b;
      for (std::size_t j = 0; j < b; ++j) yi[j] += w * xl[j];
    }
  }
}

/// y += A^T * x where A is stored (r x k), so the result is (k x B).
inline void gemm_tn_acc(double* y, const double* a, const double* x,
                        std::size_t r, std::size_t k, std::size_t b) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * k;
    const double* xi = x + i * b;
    for (std::size_t l = 0; l < k; ++l) {
      const double w = ai[l];
      double* yl = y + l * b;
      for (std::size_t j = 0; j < b; ++j) yl[j] += w * xi[j];
    }
  }
}

/// dW += dy * x^T where dy is (r x B) and x is (k x B); dW is (r x k).
inline void gemm_nt_acc(double* dw, const double* dy, const double* x,
                        std::size_t r, std::size_t k, std::size_t b) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* di = dy + i * b;
    double* wi = dw + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double* xl = x + l * b;
      double acc = 0.0;
      for (std::size_t j = 0; j < b; ++j) acc += di[j] * xl[j];
      wi[l] += acc;
    }
  }
}

/// Solves A x = rhs in place for a small dense system via Gaussian
/// elimination with partial pivoting.  Throws SingularHessianError when a
/// pivot is smaller than `tol` times the largest absolute entry of A.
inline std::vector<double> solve_dense(Matrix a, std::vector<double> rhs,
                                       double tol = 1e-12) {
  const std::size_t n = a.rows();
  if (a.cols() != n || rhs.size() != n)
    throw ShapeError("solve_dense: system is not square");
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      scale = std::max(scale, std::fabs(a(i, j)));
  if (scale == 0.0) throw SingularHessianError("solve_dense: zero matrix");
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a(r, c)) > std::fabs(a(piv, c))) piv = r;
    if (std::fabs(a(piv, c)) <= tol * scale)
      throw SingularHessianError("solve_dense: pivot " + std::to_string(c) +
                                 " is numerically zero");
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
      std::swap(rhs[c], rhs[piv]);
    }
    const double inv = 1.0 / a(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) * inv;
      if (f == 0.0) continue;
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
      rhs[r] -= f * rhs[c];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double acc = rhs[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= a(i, j) * rhs[j];
    rhs[i] = acc / a(i, i);
  }
  return rhs;
}

}  // namespace aelab
