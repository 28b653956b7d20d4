#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "odim/matrix.hpp"
#include "odim/rng.hpp"
#include "odim/scaler.hpp"

namespace odim {

// Linear factor model: decoder x = W z + b + N(0, sigma^2 I), encoder
// z = U x + v + N(0, eta^2 I). sigma and eta are fixed, only (W, b, U, v)
// carry gradients. This is the model whose initial-update gradient magnitude
// scales as the fourth power of the input l1-norm.

struct LinearVaeParams {
  Matrix w;                // D x d loading matrix
  std::vector<double> b;   // D
  Matrix u;                // d x D encoder matrix
  std::vector<double> v;   // d
  double sigma = 1.0;      // decoder noise std, fixed
  double eta = 1.0;        // encoder noise std, fixed
};

struct LinearVaeGrad {
  Matrix dw;
  std::vector<double> db;
};

// Closed-form gradient of the ELBO with respect to (W, b):
//   d/dw_ij = [ (x_i - b_i) c_j - c_j sum_j' w_ij' c_j' - w_ij eta^2 ] / sigma^2
//   d/db_i  = [ (x_i - b_i) - sum_j w_ij c_j ] / sigma^2
// with c_j = u_j' x + v_j. No sampling.
inline LinearVaeGrad linear_vae_grad_theta(const LinearVaeParams& p,
                                           std::span<const double> x) {
  const std::size_t big_d = p.w.rows, d = p.w.cols;
  if (x.size() != big_d || p.u.rows != d || p.u.cols != big_d)
    throw ShapeError("linear_vae_grad_theta: dimension mismatch");
  const double inv_s2 = 1.0 / (p.sigma * p.sigma);
  const double eta2 = p.eta * p.eta;

  std::vector<double> c(d);
  for (std::size_t j = 0; j < d; ++j) {
    double s = p.v[j];
    const double* uj = p.u.data.data() + j * big_d;
    for (std::size_t i = 0; i < big_d; ++i) s += uj[i] * x[i];
    c[j] = s;
  }

  LinearVaeGrad g;
  g.dw.resize(big_d, d);
  g.db.resize(big_d);
  for (std::size_t i = 0; i < big_d; ++i) {
    const double* wi = p.w.data.data() + i * d;
    double wc = 0.0;
    for (std::size_t j = 0; j < d; ++j) wc += wi[j] * c[j];
    for (std::size_t j = 0; j < d; ++j)
      g.dw(i, j) = inv_s2 * ((x[i] - p.b[i]) * c[j] - c[j] * wc - wi[j] * eta2);
    g.db[i] = inv_s2 * ((x[i] - p.b[i]) - wc);
  }
  return g;
}

enum class SweepDirection { AllOnes, Random };

struct Prop1Result {
  std::vector<double> norms_l1;
  std::vector<double> norms_l2;
  std::vector<double> estimates;  // mean squared gradient norm per target norm
  double slope_l1 = 0.0;          // log-log slope vs l1-norm
  double slope_l2 = 0.0;          // log-log slope vs l2-norm
  double slope_stderr = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // approximate 95% interval for slope_l1
  std::size_t n_inits = 0;
};

namespace detail {

inline std::pair<double, double> loglog_fit(std::span<const double> xs,
                                            std::span<const double> ys) {
  const std::size_t m = xs.size();
  std::vector<double> lx(m), ly(m);
  for (std::size_t i = 0; i < m; ++i) {
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  const double slope = sxy / sxx;
  double rss = 0.0;
  const double intercept = my - slope * mx;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = ly[i] - (intercept + slope * lx[i]);
    rss += r * r;
  }
  const double se =
      m > 2 ? std::sqrt(rss / static_cast<double>(m - 2) / sxx) : 0.0;
  return {slope, se};
}

}  // namespace detail

// Monte-Carlo estimate of E_{theta,phi} ||dL/d theta||_2^2 over random
// Unif[-1,1] initializations of (W, b, U, v), swept over target l1-norms of
// the input, and the fitted log-log slope. The statement concerns the very
// first update direction, so no training happens here: each replicate is a
// fresh initialization. sigma = eta = 1 (the slope does not depend on them).
inline Prop1Result prop1_scaling_experiment(std::size_t big_d, std::size_t d,
                                            std::size_t n_inits,
                                            std::span<const double> norms,
                                            SeededRng& rng,
                                            SweepDirection direction =
                                                SweepDirection::AllOnes) {
  if (norms.size() < 2)
    throw ArgumentError("prop1_scaling_experiment: need >= 2 target norms");
  Prop1Result res;
  res.n_inits = n_inits;

  LinearVaeParams p;
  p.w.resize(big_d, d);
  p.b.resize(big_d);
  p.u.resize(d, big_d);
  p.v.resize(d);

  std::vector<double> x(big_d);
  for (double target : norms) {
    if (direction == SweepDirection::AllOnes) {
      std::fill(x.begin(), x.end(), target / static_cast<double>(big_d));
    } else {
      double l1 = 0.0;
      for (auto& xi : x) {
        xi = rng.gauss();
        l1 += std::abs(xi);
      }
      for (auto& xi : x) xi *= target / l1;
    }
    double l2 = 0.0;
    for (double xi : x) l2 += xi * xi;

    double acc = 0.0;
    for (std::size_t rep = 0; rep < n_inits; ++rep) {
      for (auto& t : p.w.data) t = rng.uniform(-1.0, 1.0);
      for (auto& t : p.b) t = rng.uniform(-1.0, 1.0);
      for (auto& t : p.u.data) t = rng.uniform(-1.0, 1.0);
      for (auto& t : p.v) t = rng.uniform(-1.0, 1.0);
      const LinearVaeGrad g = linear_vae_grad_theta(p, x);
      double sq = 0.0;
      for (double t : g.dw.data) sq += t * t;
      for (double t : g.db) sq += t * t;
      acc += sq;
    }
    res.norms_l1.push_back(target);
    res.norms_l2.push_back(std::sqrt(l2));
    res.estimates.push_back(acc / static_cast<double>(n_inits));
  }

  auto [s1, se1] = detail::loglog_fit(res.norms_l1, res.estimates);
  auto [s2, se2] = detail::loglog_fit(res.norms_l2, res.estimates);
  res.slope_l1 = s1;
  res.slope_l2 = s2;
  res.slope_stderr = se1;
  res.ci_lo = s1 - 2.0 * se1;
  res.ci_hi = s1 + 2.0 * se1;
  return res;
}

struct Prop2Result {
  double minmax_inlier_mean = 0.0;
  double minmax_outlier_mean = 0.0;
  double minmax_gap = 0.0;  // outlier - inlier
  double minmax_gap_se = 0.0;
  double standardize_inlier_mean = 0.0;
  double standardize_outlier_mean = 0.0;
  double standardize_gap = 0.0;
  double standardize_gap_se = 0.0;
  std::size_t n_inliers = 0;
  std::size_t n_outliers = 0;
};

// Zero-mean inliers on an inner box, zero-mean outliers wrapping it:
// inlier coordinates Unif[-1,1], outlier coordinates +-Unif[1.1,2]. Both
// scalers are fitted on the pooled sample; the result compares mean l1-norms
// after scaling. Min-max leaves the means equal, standardization inflates the
// outliers'.
inline Prop2Result prop2_norm_experiment(std::size_t big_d, std::size_t n_samples,
                                         SeededRng& rng) {
  if (n_samples < 4) throw ArgumentError("prop2_norm_experiment: too few samples");
  const std::size_t n_in = n_samples / 2;
  const std::size_t n_out = n_samples - n_in;

  Matrix x(n_samples, big_d);
  for (std::size_t i = 0; i < n_in; ++i)
    for (std::size_t j = 0; j < big_d; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
  for (std::size_t i = n_in; i < n_samples; ++i)
    for (std::size_t j = 0; j < big_d; ++j) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      x(i, j) = sign * rng.uniform(1.1, 2.0);
    }

  auto group_l1 = [&](const Matrix& m, std::size_t lo, std::size_t hi) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      double l1 = 0.0;
      for (std::size_t j = 0; j < big_d; ++j) l1 += std::abs(m(i, j));
      s += l1;
      s2 += l1 * l1;
    }
    const double n = static_cast<double>(hi - lo);
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    return std::pair{mean, std::sqrt(std::max(var, 0.0) / n)};
  };

  Prop2Result res;
  res.n_inliers = n_in;
  res.n_outliers = n_out;
  {
    const Matrix y = transform(x, fit_scaler(x, ScalerKind::MinMax));
    auto [mi, si] = group_l1(y, 0, n_in);
    auto [mo, so] = group_l1(y, n_in, n_samples);
    res.minmax_inlier_mean = mi;
    res.minmax_outlier_mean = mo;
    res.minmax_gap = mo - mi;
    res.minmax_gap_se = std::sqrt(si * si + so * so);
  }
  {
    const Matrix y = transform(x, fit_scaler(x, ScalerKind::Standardize));
    auto [mi, si] = group_l1(y, 0, n_in);
    auto [mo, so] = group_l1(y, n_in, n_samples);
    res.standardize_inlier_mean = mi;
    res.standardize_outlier_mean = mo;
    res.standardize_gap = mo - mi;
    res.standardize_gap_se = std::sqrt(si * si + so * so);
  }
  return res;
}

}  // namespace odim
