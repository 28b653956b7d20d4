#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "odim/error.hpp"

namespace odim {

// Dense row-major matrix of doubles. Rows are samples throughout the library,
// so minibatch slices are contiguous. Immutable by convention once built;
// share freely across threads.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::initializer_list<double> init)
      : rows(r), cols(c), data(init) {
    if (data.size() != r * c) throw ShapeError("matrix: initializer size mismatch");
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    data.assign(r * c, 0.0);
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

namespace detail {
inline void check(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}
}  // namespace detail

namespace detail {

// Row-accumulation cores shared by the matmul variants. k is unrolled by four
// and rows are paired so the streamed b-rows amortize over eight fused
// multiply-adds; the j loops vectorize without reassociation, so results stay
// bit-reproducible.
inline void accum_row(double* oi, const double* ai, const Matrix& b,
                      std::size_t kk, std::size_t n, bool init = false) {
  std::size_t k = 0;
  if (init) {
    if (kk >= 4) {
      const double a0 = ai[0], a1 = ai[1], a2 = ai[2], a3 = ai[3];
      const double* b0 = b.data.data();
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j)
        oi[j] = a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      k = 4;
    } else {
      for (std::size_t j = 0; j < n; ++j) oi[j] = 0.0;
    }
  }
  for (; k + 4 <= kk; k += 4) {
    const double a0 = ai[k], a1 = ai[k + 1], a2 = ai[k + 2], a3 = ai[k + 3];
    const double* b0 = b.data.data() + k * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t j = 0; j < n; ++j)
      oi[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
  }
  for (; k < kk; ++k) {
    const double ak = ai[k];
    const double* bk = b.data.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) oi[j] += ak * bk[j];
  }
}

inline void accum_2rows(double* o0, double* o1, const double* a0r,
                        const double* a1r, const Matrix& b, std::size_t kk,
                        std::size_t n, bool init = false) {
  std::size_t k = 0;
  if (init) {
    if (kk >= 4) {
      const double p0 = a0r[0], p1 = a0r[1], p2 = a0r[2], p3 = a0r[3];
      const double q0 = a1r[0], q1 = a1r[1], q2 = a1r[2], q3 = a1r[3];
      const double* b0 = b.data.data();
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) {
        o0[j] = p0 * b0[j] + p1 * b1[j] + p2 * b2[j] + p3 * b3[j];
        o1[j] = q0 * b0[j] + q1 * b1[j] + q2 * b2[j] + q3 * b3[j];
      }
      k = 4;
    } else {
      for (std::size_t j = 0; j < n; ++j) o0[j] = 0.0;
      for (std::size_t j = 0; j < n; ++j) o1[j] = 0.0;
    }
  }
  for (; k + 4 <= kk; k += 4) {
    const double p0 = a0r[k], p1 = a0r[k + 1], p2 = a0r[k + 2], p3 = a0r[k + 3];
    const double q0 = a1r[k], q1 = a1r[k + 1], q2 = a1r[k + 2], q3 = a1r[k + 3];
    const double* b0 = b.data.data() + k * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t j = 0; j < n; ++j) {
      o0[j] += p0 * b0[j] + p1 * b1[j] + p2 * b2[j] + p3 * b3[j];
      o1[j] += q0 * b0[j] + q1 * b1[j] + q2 * b2[j] + q3 * b3[j];
    }
  }
  for (; k < kk; ++k) {
    const double p = a0r[k], q = a1r[k];
    const double* bk = b.data.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) {
      o0[j] += p * bk[j];
      o1[j] += q * bk[j];
    }
  }
}

}  // namespace detail

// out (+)= a * b. Accumulation runs in fixed i,k,j order; results are
// reproducible bit-for-bit for identical inputs.
inline void matmul_into(Matrix& out, const Matrix& a, const Matrix& b,
                        bool accumulate = false) {
  detail::check(a.cols == b.rows, "matmul: inner dimensions differ");
  if (!accumulate) {
    if (out.rows != a.rows || out.cols != b.cols) {
      out.rows = a.rows;
      out.cols = b.cols;
      out.data.resize(a.rows * b.cols);
    }
  } else {
    detail::check(out.rows == a.rows && out.cols == b.cols,
                  "matmul: accumulator shape mismatch");
  }
  const bool init = !accumulate;  // first k-block writes instead of adding
  const std::size_t n = b.cols;
  std::size_t i = 0;
  for (; i + 2 <= a.rows; i += 2)
    detail::accum_2rows(out.data.data() + i * n, out.data.data() + (i + 1) * n,
                        a.data.data() + i * a.cols,
                        a.data.data() + (i + 1) * a.cols, b, a.cols, n, init);
  for (; i < a.rows; ++i)
    detail::accum_row(out.data.data() + i * n, a.data.data() + i * a.cols, b,
                      a.cols, n, init);
}

// out = a * b with every output row pre-filled from `bias` instead of zero;
// fuses the row-broadcast bias add into the product.
inline void matmul_bias_into(Matrix& out, const Matrix& a, const Matrix& b,
                             std::span<const double> bias) {
  detail::check(a.cols == b.rows && bias.size() == b.cols,
                "matmul_bias: dimensions differ");
  if (out.rows != a.rows || out.cols != b.cols) {
    out.rows = a.rows;
    out.cols = b.cols;
    out.data.resize(a.rows * b.cols);
  }
  const std::size_t n = b.cols;
  std::size_t i = 0;
  for (; i + 2 <= a.rows; i += 2) {
    double* o0 = out.data.data() + i * n;
    double* o1 = o0 + n;
    for (std::size_t j = 0; j < n; ++j) o0[j] = bias[j];
    for (std::size_t j = 0; j < n; ++j) o1[j] = bias[j];
    detail::accum_2rows(o0, o1, a.data.data() + i * a.cols,
                        a.data.data() + (i + 1) * a.cols, b, a.cols, n);
  }
  for (; i < a.rows; ++i) {
    double* oi = out.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) oi[j] = bias[j];
    detail::accum_row(oi, a.data.data() + i * a.cols, b, a.cols, n);
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out;
  matmul_into(out, a, b);
  return out;
}

// out = a * b^T; rows of both operands are contiguous, so the dot products
// vectorize without a transpose copy.
inline void matmul_nt_into(Matrix& out, const Matrix& a, const Matrix& b) {
  detail::check(a.cols == b.cols, "matmul_nt: inner dimensions differ");
  out.resize(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* bj = b.data.data() + j * b.cols;
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      out(i, j) = s;
    }
  }
}

inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix out;
  matmul_nt_into(out, a, b);
  return out;
}

// out (+)= a^T * b, as rank-1 updates blocked four rows at a time. The fixed
// k order keeps gradient accumulation reproducible.
inline void matmul_tn_into(Matrix& out, const Matrix& a, const Matrix& b,
                           bool accumulate = false) {
  detail::check(a.rows == b.rows, "matmul_tn: inner dimensions differ");
  if (!accumulate) {
    out.resize(a.cols, b.cols);
  } else {
    detail::check(out.rows == a.cols && out.cols == b.cols,
                  "matmul_tn: accumulator shape mismatch");
  }
  const std::size_t n = b.cols;
  std::size_t k = 0;
  for (; k + 4 <= a.rows; k += 4) {
    const double* a0 = a.data.data() + k * a.cols;
    const double* a1 = a0 + a.cols;
    const double* a2 = a1 + a.cols;
    const double* a3 = a2 + a.cols;
    const double* b0 = b.data.data() + k * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    std::size_t i = 0;
    for (; i + 2 <= a.cols; i += 2) {
      const double c00 = a0[i], c10 = a1[i], c20 = a2[i], c30 = a3[i];
      const double c01 = a0[i + 1], c11 = a1[i + 1], c21 = a2[i + 1],
                   c31 = a3[i + 1];
      double* o0 = out.data.data() + i * n;
      double* o1 = o0 + n;
      for (std::size_t j = 0; j < n; ++j) {
        o0[j] += c00 * b0[j] + c10 * b1[j] + c20 * b2[j] + c30 * b3[j];
        o1[j] += c01 * b0[j] + c11 * b1[j] + c21 * b2[j] + c31 * b3[j];
      }
    }
    for (; i < a.cols; ++i) {
      const double c0 = a0[i], c1 = a1[i], c2 = a2[i], c3 = a3[i];
      double* oi = out.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j)
        oi[j] += c0 * b0[j] + c1 * b1[j] + c2 * b2[j] + c3 * b3[j];
    }
  }
  for (; k < a.rows; ++k) {
    const double* ak = a.data.data() + k * a.cols;
    const double* bk = b.data.data() + k * n;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = ak[i];
      double* oi = out.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += aki * bk[j];
    }
  }
}

inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out;
  matmul_tn_into(out, a, b);
  return out;
}

inline void transpose_into(Matrix& out, const Matrix& a) {
  out.resize(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
}

}  // namespace odim
