#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "odim/error.hpp"
#include "odim/numeric.hpp"

namespace odim {

// Two-component univariate Gaussian mixture fitted to normalized per-sample
// losses; the gap between the two components is the bimodality signal that
// gates early stopping. Components are sorted by mean.
struct Gmm2Fit {
  double pi1 = 0.5, pi2 = 0.5;
  double mu1 = 0.0, mu2 = 0.0;
  double sigma1 = 0.0, sigma2 = 0.0;
  double loglik = 0.0;
  std::size_t iterations = 0;
};

inline constexpr double kGmmSigmaFloor = 1e-6;
inline constexpr double kGmmWeightFloor = 1e-6;
inline constexpr double kGmmVanishingWeight = 1e-3;
inline constexpr double kGmmTol = 1e-6;
inline constexpr std::size_t kGmmMaxIter = 200;

// (l - min) / (max - min); a constant vector maps to all 0.5.
inline std::vector<double> normalize_losses(std::span<const double> l) {
  if (l.size() < 2) throw ArgumentError("normalize_losses: need at least 2 values");
  double lo = l[0], hi = l[0];
  for (double x : l) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  std::vector<double> out(l.size());
  if (hi == lo) {
    std::fill(out.begin(), out.end(), 0.5);
    return out;
  }
  const double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < l.size(); ++i) out[i] = (l[i] - lo) * inv;
  return out;
}

namespace detail {
inline double log_normal_pdf(double x, double mu, double sigma) {
  static const double kLog2Pi = std::log(2.0 * 3.14159265358979323846);
  const double z = (x - mu) / sigma;
  return -0.5 * kLog2Pi - std::log(sigma) - 0.5 * z * z;
}
}  // namespace detail

// EM for the 1-D GMM-2. Initialization is deterministic (median split), so the
// fit is reproducible and order-free. Variance and weight floors keep
// near-duplicate losses from collapsing a component. If `loglik_trace` is
// given it receives the data log-likelihood after every M-step.
inline Gmm2Fit fit_gmm2(std::span<const double> l_norm,
                        std::vector<double>* loglik_trace = nullptr) {
  const std::size_t n = l_norm.size();
  if (n < 4) throw ArgumentError("fit_gmm2: need at least 4 values");

  std::vector<double> sorted(l_norm.begin(), l_norm.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t half = n / 2;

  auto moments = [](std::span<const double> v) {
    const double m = mean(v);
    double s = variance(v);
    return std::pair{m, std::max(std::sqrt(s), kGmmSigmaFloor)};
  };
  auto [m1, s1] = moments(std::span<const double>{sorted.data(), half});
  auto [m2, s2] = moments(std::span<const double>{sorted.data() + half, n - half});

  Gmm2Fit fit;
  fit.pi1 = 0.5;
  fit.pi2 = 0.5;
  fit.mu1 = m1;
  fit.mu2 = m2;
  fit.sigma1 = s1;
  fit.sigma2 = s2;

  std::vector<double> r1(n);
  double prev_ll = -std::numeric_limits<double>::infinity();
  if (loglik_trace) loglik_trace->clear();

  const double kHalfLog2Pi = 0.5 * std::log(2.0 * 3.14159265358979323846);
  for (std::size_t it = 0; it < kGmmMaxIter; ++it) {
    // E-step in log space; the two-component log-sum-exp needs one exp per
    // point: r1 = 1 / (1 + exp(b - a)).
    double ll = 0.0;
    const double c1 = std::log(fit.pi1) - std::log(fit.sigma1);
    const double c2 = std::log(fit.pi2) - std::log(fit.sigma2);
    const double h1 = 0.5 / (fit.sigma1 * fit.sigma1);
    const double h2 = 0.5 / (fit.sigma2 * fit.sigma2);
    for (std::size_t i = 0; i < n; ++i) {
      const double d1 = l_norm[i] - fit.mu1;
      const double d2 = l_norm[i] - fit.mu2;
      const double a = c1 - d1 * d1 * h1;
      const double b = c2 - d2 * d2 * h2;
      const double e = std::exp(-std::abs(a - b));
      r1[i] = a >= b ? 1.0 / (1.0 + e) : e / (1.0 + e);
      ll += std::max(a, b) + std::log1p(e);
    }
    ll -= static_cast<double>(n) * kHalfLog2Pi;

    // M-step with floors.
    double n1 = 0.0, sx1 = 0.0, sx2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      n1 += r1[i];
      sx1 += r1[i] * l_norm[i];
      sx2 += (1.0 - r1[i]) * l_norm[i];
    }
    const double n2 = static_cast<double>(n) - n1;
    double pi1 = std::clamp(n1 / static_cast<double>(n), kGmmWeightFloor,
                            1.0 - kGmmWeightFloor);
    fit.pi1 = pi1;
    fit.pi2 = 1.0 - pi1;
    fit.mu1 = sx1 / std::max(n1, kGmmWeightFloor);
    fit.mu2 = sx2 / std::max(n2, kGmmWeightFloor);
    double v1 = 0.0, v2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v1 += r1[i] * (l_norm[i] - fit.mu1) * (l_norm[i] - fit.mu1);
      v2 += (1.0 - r1[i]) * (l_norm[i] - fit.mu2) * (l_norm[i] - fit.mu2);
    }
    fit.sigma1 = std::max(std::sqrt(v1 / std::max(n1, kGmmWeightFloor)), kGmmSigmaFloor);
    fit.sigma2 = std::max(std::sqrt(v2 / std::max(n2, kGmmWeightFloor)), kGmmSigmaFloor);

    fit.loglik = ll;
    fit.iterations = it + 1;
    if (loglik_trace) loglik_trace->push_back(ll);
    if (ll - prev_ll < kGmmTol && it > 0) break;
    prev_ll = ll;
  }

  if (fit.mu1 > fit.mu2) {
    std::swap(fit.mu1, fit.mu2);
    std::swap(fit.sigma1, fit.sigma2);
    std::swap(fit.pi1, fit.pi2);
  }
  return fit;
}

// 2-Wasserstein distance between the two fitted components,
// sqrt((mu1-mu2)^2 + (sigma1-sigma2)^2). Mixture weights do not enter the
// distance, but a vanishing component (pi < 1e-3) returns 0 so the stopping
// rule does not chase spurious singleton clusters.
inline double wasserstein_gauss(const Gmm2Fit& f) {
  if (f.pi1 < kGmmVanishingWeight || f.pi2 < kGmmVanishingWeight) return 0.0;
  const double dm = f.mu1 - f.mu2;
  const double ds = f.sigma1 - f.sigma2;
  return std::sqrt(dm * dm + ds * ds);
}

}  // namespace odim
