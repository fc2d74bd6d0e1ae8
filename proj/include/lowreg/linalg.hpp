#pragma once

#include <vector>

namespace lowreg {

/// Dense row-major matrix, double precision.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * cols + j];
  }
  double& operator()(int i, int j) {
    return data[static_cast<std::size_t>(i) * cols + j];
  }

  static Matrix identity(int n);
};

/// SVD factors A ~= U * diag(S) * V^T. thin_svd returns k = min(rows, cols)
/// triples; truncate keeps the leading r of them.
struct SvdFactors {
  Matrix u;              // rows x k
  std::vector<double> s; // k, sorted descending, all >= 0
  Matrix v;              // cols x k

  int rank() const { return static_cast<int>(s.size()); }
};

/// One-sided Jacobi SVD. Deterministic: fixed cyclic sweep order plus a sign
/// convention that makes the first nonzero entry of every U column
/// non-negative. Columns belonging to zero singular values are completed to
/// an orthonormal basis.
SvdFactors thin_svd(const Matrix& a);

/// Leading-r slices of the factors, 1 <= r <= k.
SvdFactors truncate(const SvdFactors& f, int r);

/// U * diag(S) * V^T.
Matrix reconstruct(const SvdFactors& f);

double frobenius_norm(const Matrix& a);

Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b with a stored untransposed.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T with b stored untransposed.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// Raw kernels shared with the slice-wise projector hot path. All row-major;
// c is overwritten.
void gemm_tn(const double* a, int k, int m, const double* b, int n, double* c);
void gemm_nn(const double* a, int m, int k, const double* b, int n, double* c);
void gemm_nt(const double* a, int m, int k, const double* b, int n, double* c);

} // namespace lowreg
