#include "lowreg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lowreg {

namespace {

constexpr double kSweepTol = 1e-12; // relative off-diagonal threshold
constexpr int kMaxSweeps = 60;

void check_finite(const Matrix& a, const char* who) {
  if (a.rows < 1 || a.cols < 1)
    throw std::invalid_argument(std::string(who) + ": matrix must be non-empty");
  if (static_cast<std::size_t>(a.rows) * a.cols != a.data.size())
    throw std::invalid_argument(std::string(who) + ": dims/data size mismatch");
  for (double x : a.data)
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(who) + ": non-finite entry");
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j)
      t(j, i) = a(i, j);
  return t;
}

// Core one-sided Jacobi on a tall-or-square matrix (rows >= cols).
SvdFactors jacobi_tall(const Matrix& a) {
  const int m = a.rows;
  const int n = a.cols;

  // Column-major working copies: rotations touch whole columns.
  std::vector<double> b(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      b[static_cast<std::size_t>(j) * m + i] = a(i, j);
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int j = 0; j < n; ++j)
    v[static_cast<std::size_t>(j) * n + j] = 1.0;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double* bp = &b[static_cast<std::size_t>(p) * m];
        double* bq = &b[static_cast<std::size_t>(q) * m];
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int i = 0; i < m; ++i) {
          alpha += bp[i] * bp[i];
          beta += bq[i] * bq[i];
          gamma += bp[i] * bq[i];
        }
        if (std::abs(gamma) <= kSweepTol * std::sqrt(alpha * beta))
          continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < m; ++i) {
          const double bpi = bp[i];
          bp[i] = c * bpi - s * bq[i];
          bq[i] = s * bpi + c * bq[i];
        }
        double* vp = &v[static_cast<std::size_t>(p) * n];
        double* vq = &v[static_cast<std::size_t>(q) * n];
        for (int i = 0; i < n; ++i) {
          const double vpi = vp[i];
          vp[i] = c * vpi - s * vq[i];
          vq[i] = s * vpi + c * vq[i];
        }
      }
    }
    if (!rotated)
      break;
  }

  std::vector<double> sigma(n);
  for (int j = 0; j < n; ++j) {
    const double* bj = &b[static_cast<std::size_t>(j) * m];
    double ss = 0.0;
    for (int i = 0; i < m; ++i)
      ss += bj[i] * bj[i];
    sigma[j] = std::sqrt(ss);
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return sigma[x] > sigma[y]; });

  SvdFactors f;
  f.u = Matrix(m, n);
  f.v = Matrix(n, n);
  f.s.resize(n);
  const double smax = sigma[order[0]];
  const double zero_tol = smax * kSweepTol;

  for (int j = 0; j < n; ++j) {
    const int src = order[j];
    f.s[j] = sigma[src];
    const double* vs = &v[static_cast<std::size_t>(src) * n];
    for (int i = 0; i < n; ++i)
      f.v(i, j) = vs[i];
    if (sigma[src] > zero_tol) {
      const double inv = 1.0 / sigma[src];
      const double* bs = &b[static_cast<std::size_t>(src) * m];
      for (int i = 0; i < m; ++i)
        f.u(i, j) = bs[i] * inv;
    } else {
      // Null direction: complete U to an orthonormal set with the canonical
      // basis vector least represented by the columns placed so far (its
      // residual against them is 1 - sum of squared entries in row cand),
      // then re-orthogonalize it twice.
      int best = 0;
      double best_r2 = -1.0;
      for (int cand = 0; cand < m; ++cand) {
        double proj2 = 0.0;
        for (int k = 0; k < j; ++k)
          proj2 += f.u(cand, k) * f.u(cand, k);
        if (1.0 - proj2 > best_r2) {
          best_r2 = 1.0 - proj2;
          best = cand;
        }
      }
      std::vector<double> w(m, 0.0);
      w[best] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (int k = 0; k < j; ++k) {
          double dot = 0.0;
          for (int i = 0; i < m; ++i)
            dot += w[i] * f.u(i, k);
          for (int i = 0; i < m; ++i)
            w[i] -= dot * f.u(i, k);
        }
      }
      double norm = 0.0;
      for (double x : w)
        norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-6)
        throw std::runtime_error("thin_svd: basis completion failed");
      for (int i = 0; i < m; ++i)
        f.u(i, j) = w[i] / norm;
    }
  }

  // Sign convention: first nonzero entry of each U column is non-negative.
  for (int j = 0; j < n; ++j) {
    double lead = 0.0;
    for (int i = 0; i < m; ++i) {
      if (std::abs(f.u(i, j)) > 1e-12) {
        lead = f.u(i, j);
        break;
      }
    }
    if (lead < 0.0) {
      for (int i = 0; i < m; ++i)
        f.u(i, j) = -f.u(i, j);
      for (int i = 0; i < n; ++i)
        f.v(i, j) = -f.v(i, j);
    }
  }
  return f;
}

} // namespace

Matrix Matrix::identity(int n) {
  Matrix e(n, n);
  for (int i = 0; i < n; ++i)
    e(i, i) = 1.0;
  return e;
}

SvdFactors thin_svd(const Matrix& a) {
  check_finite(a, "thin_svd");
  if (a.rows >= a.cols)
    return jacobi_tall(a);
  SvdFactors ft = jacobi_tall(transpose(a));
  SvdFactors f;
  f.u = std::move(ft.v);
  f.s = std::move(ft.s);
  f.v = std::move(ft.u);
  return f;
}

SvdFactors truncate(const SvdFactors& f, int r) {
  if (r < 1 || r > f.rank())
    throw std::invalid_argument("truncate: rank out of range");
  SvdFactors g;
  g.u = Matrix(f.u.rows, r);
  g.v = Matrix(f.v.rows, r);
  g.s.assign(f.s.begin(), f.s.begin() + r);
  for (int i = 0; i < f.u.rows; ++i)
    for (int j = 0; j < r; ++j)
      g.u(i, j) = f.u(i, j);
  for (int i = 0; i < f.v.rows; ++i)
    for (int j = 0; j < r; ++j)
      g.v(i, j) = f.v(i, j);
  return g;
}

Matrix reconstruct(const SvdFactors& f) {
  const int r = f.rank();
  if (r < 1 || f.u.cols != r || f.v.cols != r)
    throw std::invalid_argument("reconstruct: inconsistent factors");
  Matrix vs = f.v; // scale columns by singular values, then U * (V S)^T
  for (int i = 0; i < vs.rows; ++i)
    for (int j = 0; j < r; ++j)
      vs(i, j) *= f.s[j];
  return matmul_nt(f.u, vs);
}

double frobenius_norm(const Matrix& a) {
  double ss = 0.0;
  for (double x : a.data)
    ss += x * x;
  return std::sqrt(ss);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw std::invalid_argument("matmul: inner dims mismatch");
  Matrix c(a.rows, b.cols);
  gemm_nn(a.data.data(), a.rows, a.cols, b.data.data(), b.cols, c.data.data());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw std::invalid_argument("matmul_tn: inner dims mismatch");
  Matrix c(a.cols, b.cols);
  gemm_tn(a.data.data(), a.rows, a.cols, b.data.data(), b.cols, c.data.data());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw std::invalid_argument("matmul_nt: inner dims mismatch");
  Matrix c(a.rows, b.rows);
  gemm_nt(a.data.data(), a.rows, a.cols, b.data.data(), b.rows, c.data.data());
  return c;
}

void gemm_nn(const double* a, int m, int k, const double* b, int n, double* c) {
  std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* __restrict__ ci = c + static_cast<std::size_t>(i) * n;
    int l = 0;
    // Four rank-1 updates per pass over the output row.
    for (; l + 4 <= k; l += 4) {
      const double a0 = ai[l], a1 = ai[l + 1], a2 = ai[l + 2], a3 = ai[l + 3];
      const double* b0 = b + static_cast<std::size_t>(l) * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (int j = 0; j < n; ++j)
        ci[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; l < k; ++l) {
      const double av = ai[l];
      const double* bl = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j)
        ci[j] += av * bl[j];
    }
  }
}

void gemm_tn(const double* a, int k, int m, const double* b, int n, double* c) {
  std::fill(c, c + static_cast<std::size_t>(m) * n, 0.0);
  int i = 0;
  // Four output rows share each load of a b-row.
  for (; i + 4 <= m; i += 4) {
    double* __restrict__ c0 = c + static_cast<std::size_t>(i) * n;
    double* __restrict__ c1 = c0 + n;
    double* __restrict__ c2 = c1 + n;
    double* __restrict__ c3 = c2 + n;
    for (int l = 0; l < k; ++l) {
      const double* al = a + static_cast<std::size_t>(l) * m + i;
      const double* bl = b + static_cast<std::size_t>(l) * n;
      const double a0 = al[0], a1 = al[1], a2 = al[2], a3 = al[3];
      for (int j = 0; j < n; ++j) {
        c0[j] += a0 * bl[j];
        c1[j] += a1 * bl[j];
        c2[j] += a2 * bl[j];
        c3[j] += a3 * bl[j];
      }
    }
  }
  for (; i < m; ++i) {
    double* __restrict__ ci = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = a[static_cast<std::size_t>(l) * m + i];
      const double* bl = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j)
        ci[j] += av * bl[j];
    }
  }
}

void gemm_nt(const double* a, int m, int k, const double* b, int n, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int l = 0; l < k; ++l)
        acc += ai[l] * bj[l];
      c[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
}

} // namespace lowreg
