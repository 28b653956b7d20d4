#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "odim/matrix.hpp"

namespace odim {

enum class ScalerKind { MinMax, Standardize };

// Per-feature statistics fitted once on the whole training set. For min-max,
// a = column minimum and b = column maximum; for standardization, a = mean and
// b = population standard deviation. Constant features are masked and map to 0.
struct ScalerParams {
  ScalerKind kind = ScalerKind::MinMax;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<std::uint8_t> constant;
};

inline ScalerParams fit_scaler(const Matrix& x, ScalerKind kind) {
  if (x.rows == 0 || x.cols == 0) throw ArgumentError("fit_scaler: empty matrix");
  ScalerParams p;
  p.kind = kind;
  p.a.resize(x.cols);
  p.b.resize(x.cols);
  p.constant.assign(x.cols, 0);
  for (std::size_t j = 0; j < x.cols; ++j) {
    if (kind == ScalerKind::MinMax) {
      double lo = x(0, j), hi = x(0, j);
      for (std::size_t i = 1; i < x.rows; ++i) {
        lo = std::min(lo, x(i, j));
        hi = std::max(hi, x(i, j));
      }
      p.a[j] = lo;
      p.b[j] = hi;
      p.constant[j] = (hi == lo);
    } else {
      double s = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) s += x(i, j);
      const double mu = s / static_cast<double>(x.rows);
      double ss = 0.0;
      for (std::size_t i = 0; i < x.rows; ++i) ss += (x(i, j) - mu) * (x(i, j) - mu);
      const double sd = std::sqrt(ss / static_cast<double>(x.rows));
      p.a[j] = mu;
      p.b[j] = sd;
      p.constant[j] = (sd == 0.0);
    }
  }
  return p;
}

// Min-max output is clamped to [0,1] so samples outside the fitted range stay
// inside the model's operating box.
inline Matrix transform(const Matrix& x, const ScalerParams& p) {
  if (x.cols != p.a.size()) throw ShapeError("transform: column count mismatch");
  Matrix out(x.rows, x.cols);
  for (std::size_t j = 0; j < x.cols; ++j) {
    if (p.constant[j]) continue;  // stays 0
    if (p.kind == ScalerKind::MinMax) {
      const double inv = 1.0 / (p.b[j] - p.a[j]);
      for (std::size_t i = 0; i < x.rows; ++i)
        out(i, j) = std::clamp((x(i, j) - p.a[j]) * inv, 0.0, 1.0);
    } else {
      const double inv = 1.0 / p.b[j];
      for (std::size_t i = 0; i < x.rows; ++i) out(i, j) = (x(i, j) - p.a[j]) * inv;
    }
  }
  return out;
}

// Inverse on non-constant features; constant features map back to their
// fitted value.
inline Matrix inverse_transform(const Matrix& y, const ScalerParams& p) {
  if (y.cols != p.a.size()) throw ShapeError("inverse_transform: column count mismatch");
  Matrix out(y.rows, y.cols);
  for (std::size_t j = 0; j < y.cols; ++j) {
    for (std::size_t i = 0; i < y.rows; ++i) {
      if (p.constant[j]) {
        out(i, j) = p.a[j];
      } else if (p.kind == ScalerKind::MinMax) {
        out(i, j) = p.a[j] + y(i, j) * (p.b[j] - p.a[j]);
      } else {
        out(i, j) = p.a[j] + y(i, j) * p.b[j];
      }
    }
  }
  return out;
}

}  // namespace odim
