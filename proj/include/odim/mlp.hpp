#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "odim/matrix.hpp"
#include "odim/numeric.hpp"
#include "odim/rng.hpp"

namespace odim {

// Gaussian encoder q(z|x) and Gaussian decoder p(x|z), each a two-hidden-layer
// MLP with leaky-rectifier activations. The decoder mean passes through a
// sigmoid by default (data lives in [0,1] after min-max scaling) and its
// per-feature log-variance is a learnable vector shared across samples.
// Log-variances are clamped to [-6, 2] on both sides; clamped coordinates get
// zero gradient at the boundary.

inline constexpr double kLogvarMin = -6.0;
inline constexpr double kLogvarMax = 2.0;
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kLog2Pi = 1.8378770664093454836;

enum class InitScheme { HeUniform, Unif11 };
enum class OutputAct { Sigmoid, Identity };

struct MlpConfig {
  std::size_t input_dim = 0;   // D
  std::size_t latent_dim = 5;  // d
  std::size_t hidden_dim = 50; // h
  OutputAct output = OutputAct::Sigmoid;

  bool operator==(const MlpConfig&) const = default;
};

struct GaussianCode {
  std::vector<double> mu;
  std::vector<double> logvar;
};

struct MlpParams {
  MlpConfig cfg;
  // encoder
  Matrix enc_w1, enc_w2, enc_wmu, enc_wlv;              // h*D, h*h, d*h, d*h
  std::vector<double> enc_b1, enc_b2, enc_bmu, enc_blv; // h, h, d, d
  // decoder
  Matrix dec_w1, dec_w2, dec_wmu;                       // h*d, h*h, D*h
  std::vector<double> dec_b1, dec_b2, dec_bmu;          // h, h, D
  std::vector<double> dec_logvar;                       // D (gamma)

  MlpParams() = default;
  explicit MlpParams(MlpConfig c) : cfg(c) {
    const std::size_t D = c.input_dim, d = c.latent_dim, h = c.hidden_dim;
    enc_w1.resize(h, D);
    enc_w2.resize(h, h);
    enc_wmu.resize(d, h);
    enc_wlv.resize(d, h);
    enc_b1.assign(h, 0.0);
    enc_b2.assign(h, 0.0);
    enc_bmu.assign(d, 0.0);
    enc_blv.assign(d, 0.0);
    dec_w1.resize(h, d);
    dec_w2.resize(h, h);
    dec_wmu.resize(D, h);
    dec_b1.assign(h, 0.0);
    dec_b2.assign(h, 0.0);
    dec_bmu.assign(D, 0.0);
    dec_logvar.assign(D, 0.0);
  }

  static constexpr std::size_t kTensorCount = 15;

  // Fixed tensor order; optimizers, DP clipping and serialization all iterate
  // in this order.
  std::array<std::span<double>, kTensorCount> tensor_spans() {
    return {std::span<double>(enc_w1.data), std::span<double>(enc_b1),
            std::span<double>(enc_w2.data), std::span<double>(enc_b2),
            std::span<double>(enc_wmu.data), std::span<double>(enc_bmu),
            std::span<double>(enc_wlv.data), std::span<double>(enc_blv),
            std::span<double>(dec_w1.data), std::span<double>(dec_b1),
            std::span<double>(dec_w2.data), std::span<double>(dec_b2),
            std::span<double>(dec_wmu.data), std::span<double>(dec_bmu),
            std::span<double>(dec_logvar)};
  }
  std::array<std::span<const double>, kTensorCount> tensor_spans() const {
    auto mut = const_cast<MlpParams*>(this)->tensor_spans();
    std::array<std::span<const double>, kTensorCount> out;
    for (std::size_t i = 0; i < kTensorCount; ++i) out[i] = mut[i];
    return out;
  }

  template <class F>
  void for_each(F&& f) {
    for (auto s : tensor_spans()) f(s);
  }
  template <class F>
  void for_each(F&& f) const {
    for (auto s : tensor_spans()) f(s);
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for_each([&](std::span<const double> s) { n += s.size(); });
    return n;
  }

  void fill(double v) {
    for_each([&](std::span<double> s) { std::fill(s.begin(), s.end(), v); });
  }
};

// Zip two same-shape parameter sets.
template <class F>
inline void zip_params(MlpParams& a, const MlpParams& b, F&& f) {
  if (!(a.cfg == b.cfg)) throw ShapeError("zip_params: config mismatch");
  const auto sa = a.tensor_spans();
  const auto sb = b.tensor_spans();
  for (std::size_t i = 0; i < MlpParams::kTensorCount; ++i) f(sa[i], sb[i]);
}

inline void axpy_params(MlpParams& acc, double alpha, const MlpParams& g) {
  zip_params(acc, g, [&](std::span<double> a, std::span<const double> b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += alpha * b[i];
  });
}

inline void scale_params(MlpParams& p, double alpha) {
  p.for_each([&](std::span<double> s) {
    for (auto& x : s) x *= alpha;
  });
}

// Weight draws happen in tensor order so the layout is reproducible.
// he-uniform: U[-sqrt(6/fan_in), sqrt(6/fan_in)] per weight matrix, zero
// biases. unif11: every weight and bias from U[-1,1]. Gamma starts at 0 in
// both schemes.
inline MlpParams init_params(SeededRng& rng, MlpConfig cfg, InitScheme scheme) {
  MlpParams p(cfg);
  auto draw_matrix = [&](Matrix& w) {
    if (scheme == InitScheme::HeUniform) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.cols));
      for (auto& x : w.data) x = rng.uniform(-limit, limit);
    } else {
      for (auto& x : w.data) x = rng.uniform(-1.0, 1.0);
    }
  };
  auto draw_bias = [&](std::vector<double>& b) {
    if (scheme == InitScheme::Unif11)
      for (auto& x : b) x = rng.uniform(-1.0, 1.0);
  };
  draw_matrix(p.enc_w1);
  draw_bias(p.enc_b1);
  draw_matrix(p.enc_w2);
  draw_bias(p.enc_b2);
  draw_matrix(p.enc_wmu);
  draw_bias(p.enc_bmu);
  draw_matrix(p.enc_wlv);
  draw_bias(p.enc_blv);
  draw_matrix(p.dec_w1);
  draw_bias(p.dec_b1);
  draw_matrix(p.dec_w2);
  draw_bias(p.dec_b2);
  draw_matrix(p.dec_wmu);
  draw_bias(p.dec_bmu);
  // dec_logvar stays 0
  return p;
}

namespace detail {

// max(t, slope*t) is the leaky rectifier for slope < 1; branch-free, so the
// elementwise passes vectorize.
inline double lrelu(double t) { return std::max(t, kLeakySlope * t); }
inline double lrelu_deriv(double t) { return t > 0.0 ? 1.0 : kLeakySlope; }

inline double sigmoid(double t) {
  const double e = std::exp(-std::abs(t));
  const double s = e / (1.0 + e);
  return t >= 0.0 ? 1.0 - s : s;
}

// Clamp with zero derivative at and beyond the boundary.
inline double clamp_logvar(double raw, double* deriv) {
  if (raw <= kLogvarMin) {
    if (deriv) *deriv = 0.0;
    return kLogvarMin;
  }
  if (raw >= kLogvarMax) {
    if (deriv) *deriv = 0.0;
    return kLogvarMax;
  }
  if (deriv) *deriv = 1.0;
  return raw;
}

// y = W x + b for row-major W (rows x cols).
inline void affine(const Matrix& w, std::span<const double> b,
                   std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* wi = w.data.data() + i * w.cols;
    double s = b[i];
    for (std::size_t j = 0; j < w.cols; ++j) s += wi[j] * x[j];
    y[i] = s;
  }
}

// y = W^T g (backprop through affine).
inline void affine_back_input(const Matrix& w, std::span<const double> g,
                              std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* wi = w.data.data() + i * w.cols;
    const double gi = g[i];
    for (std::size_t j = 0; j < w.cols; ++j) y[j] += gi * wi[j];
  }
}

// dW += outer(g, x), db += g.
inline void affine_grad(Matrix& dw, std::span<double> db, std::span<const double> g,
                        std::span<const double> x) {
  for (std::size_t i = 0; i < dw.rows; ++i) {
    double* dwi = dw.data.data() + i * dw.cols;
    const double gi = g[i];
    for (std::size_t j = 0; j < dw.cols; ++j) dwi[j] += gi * x[j];
    db[i] += gi;
  }
}

}  // namespace detail

// Scratch buffers for one sample with K latent draws; reuse across calls.
struct MlpWorkspace {
  // encoder (single sample)
  std::vector<double> pre1, act1, pre2, act2;
  std::vector<double> mu, lv_raw, lv, lv_deriv, sigma;
  // decoder (K rows)
  Matrix eps, z, dpre1, dact1, dpre2, dact2, preout, mu_x;
  std::vector<double> gamma_eff, gamma_deriv;
  std::vector<double> logw, dlogw;
  // backward
  Matrix b_kh1, b_kh2, b_kD, d_z;
  std::vector<double> d_mu, d_lv, d_act2e, d_pre2e, d_act1e, d_pre1e;

  void ensure(const MlpConfig& cfg, std::size_t k) {
    const std::size_t D = cfg.input_dim, d = cfg.latent_dim, h = cfg.hidden_dim;
    pre1.resize(h);
    act1.resize(h);
    pre2.resize(h);
    act2.resize(h);
    mu.resize(d);
    lv_raw.resize(d);
    lv.resize(d);
    lv_deriv.resize(d);
    sigma.resize(d);
    if (eps.rows != k || eps.cols != d) eps.resize(k, d);
    if (z.rows != k || z.cols != d) z.resize(k, d);
    if (dpre1.rows != k || dpre1.cols != h) {
      dpre1.resize(k, h);
      dact1.resize(k, h);
      dpre2.resize(k, h);
      dact2.resize(k, h);
      b_kh1.resize(k, h);
      b_kh2.resize(k, h);
    }
    if (preout.rows != k || preout.cols != D) {
      preout.resize(k, D);
      mu_x.resize(k, D);
      b_kD.resize(k, D);
    }
    if (d_z.rows != k || d_z.cols != d) d_z.resize(k, d);
    gamma_eff.resize(D);
    gamma_deriv.resize(D);
    logw.resize(k);
    dlogw.resize(k);
    d_mu.resize(d);
    d_lv.resize(d);
    d_act2e.resize(h);
    d_pre2e.resize(h);
    d_act1e.resize(h);
    d_pre1e.resize(h);
  }
};

inline GaussianCode encode(const MlpParams& p, std::span<const double> x) {
  const std::size_t d = p.cfg.latent_dim, h = p.cfg.hidden_dim;
  std::vector<double> a1(h), a2(h);
  detail::affine(p.enc_w1, p.enc_b1, x, a1);
  for (auto& t : a1) t = detail::lrelu(t);
  detail::affine(p.enc_w2, p.enc_b2, a1, a2);
  for (auto& t : a2) t = detail::lrelu(t);
  GaussianCode c;
  c.mu.resize(d);
  c.logvar.resize(d);
  detail::affine(p.enc_wmu, p.enc_bmu, a2, c.mu);
  detail::affine(p.enc_wlv, p.enc_blv, a2, c.logvar);
  for (auto& t : c.logvar) t = detail::clamp_logvar(t, nullptr);
  return c;
}

inline void decode(const MlpParams& p, std::span<const double> z,
                   std::span<double> mu_x, std::span<double> logvar_x) {
  const std::size_t h = p.cfg.hidden_dim;
  std::vector<double> a1(h), a2(h);
  detail::affine(p.dec_w1, p.dec_b1, z, a1);
  for (auto& t : a1) t = detail::lrelu(t);
  detail::affine(p.dec_w2, p.dec_b2, a1, a2);
  for (auto& t : a2) t = detail::lrelu(t);
  detail::affine(p.dec_wmu, p.dec_bmu, a2, mu_x);
  if (p.cfg.output == OutputAct::Sigmoid)
    for (auto& t : mu_x) t = detail::sigmoid(t);
  for (std::size_t i = 0; i < logvar_x.size(); ++i)
    logvar_x[i] = detail::clamp_logvar(p.dec_logvar[i], nullptr);
}

namespace detail {

// Forward pass for one sample and K latent draws (ws.eps must hold them).
// Fills ws.logw with log w_k = log p(x|z_k) + log p(z_k) - log q(z_k|x).
inline void forward_sample(const MlpParams& p, std::span<const double> x,
                           MlpWorkspace& ws) {
  const std::size_t D = p.cfg.input_dim, d = p.cfg.latent_dim;
  const std::size_t K = ws.eps.rows;

  // encoder
  affine(p.enc_w1, p.enc_b1, x, ws.pre1);
  for (std::size_t i = 0; i < ws.pre1.size(); ++i) ws.act1[i] = lrelu(ws.pre1[i]);
  affine(p.enc_w2, p.enc_b2, ws.act1, ws.pre2);
  for (std::size_t i = 0; i < ws.pre2.size(); ++i) ws.act2[i] = lrelu(ws.pre2[i]);
  affine(p.enc_wmu, p.enc_bmu, ws.act2, ws.mu);
  affine(p.enc_wlv, p.enc_blv, ws.act2, ws.lv_raw);
  for (std::size_t j = 0; j < d; ++j) {
    ws.lv[j] = clamp_logvar(ws.lv_raw[j], &ws.lv_deriv[j]);
    ws.sigma[j] = std::exp(0.5 * ws.lv[j]);
  }

  // reparameterized draws
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < d; ++j)
      ws.z(k, j) = ws.mu[j] + ws.sigma[j] * ws.eps(k, j);

  // decoder, K rows at once
  matmul_nt_into(ws.dpre1, ws.z, p.dec_w1);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < ws.dpre1.cols; ++i) {
      ws.dpre1(k, i) += p.dec_b1[i];
      ws.dact1(k, i) = lrelu(ws.dpre1(k, i));
    }
  matmul_nt_into(ws.dpre2, ws.dact1, p.dec_w2);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < ws.dpre2.cols; ++i) {
      ws.dpre2(k, i) += p.dec_b2[i];
      ws.dact2(k, i) = lrelu(ws.dpre2(k, i));
    }
  matmul_nt_into(ws.preout, ws.dact2, p.dec_wmu);
  const bool sig = (p.cfg.output == OutputAct::Sigmoid);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < D; ++i) {
      ws.preout(k, i) += p.dec_bmu[i];
      ws.mu_x(k, i) = sig ? sigmoid(ws.preout(k, i)) : ws.preout(k, i);
    }

  for (std::size_t i = 0; i < D; ++i)
    ws.gamma_eff[i] = clamp_logvar(p.dec_logvar[i], &ws.gamma_deriv[i]);

  // log-weights
  double logdet_x = 0.0;
  for (std::size_t i = 0; i < D; ++i) logdet_x += ws.gamma_eff[i];
  for (std::size_t k = 0; k < K; ++k) {
    double lpx = -0.5 * static_cast<double>(D) * kLog2Pi - 0.5 * logdet_x;
    for (std::size_t i = 0; i < D; ++i) {
      const double r = x[i] - ws.mu_x(k, i);
      lpx -= 0.5 * r * r * std::exp(-ws.gamma_eff[i]);
    }
    double lpz = -0.5 * static_cast<double>(d) * kLog2Pi;
    double lqz = -0.5 * static_cast<double>(d) * kLog2Pi;
    for (std::size_t j = 0; j < d; ++j) {
      lpz -= 0.5 * ws.z(k, j) * ws.z(k, j);
      lqz -= 0.5 * ws.lv[j] + 0.5 * ws.eps(k, j) * ws.eps(k, j);
    }
    ws.logw[k] = lpx + lpz - lqz;
  }
}

// Backward pass; ws.dlogw holds dLoss/dlogw_k. Gradients are ADDED into grad.
inline void backward_sample(const MlpParams& p, std::span<const double> x,
                            MlpWorkspace& ws, MlpParams& grad) {
  const std::size_t D = p.cfg.input_dim, d = p.cfg.latent_dim;
  const std::size_t K = ws.eps.rows;
  const bool sig = (p.cfg.output == OutputAct::Sigmoid);

  // d log p(x|z_k) / d mu_x and gamma
  double dlogw_sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) dlogw_sum += ws.dlogw[k];
  for (std::size_t i = 0; i < D; ++i) {
    const double einv = std::exp(-ws.gamma_eff[i]);
    double dgamma = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double r = x[i] - ws.mu_x(k, i);
      double dmu = ws.dlogw[k] * r * einv;
      if (sig) dmu *= ws.mu_x(k, i) * (1.0 - ws.mu_x(k, i));
      ws.b_kD(k, i) = dmu;  // d/d preout
      dgamma += ws.dlogw[k] * (-0.5 + 0.5 * r * r * einv);
    }
    grad.dec_logvar[i] += dgamma * ws.gamma_deriv[i];
  }

  // decoder head
  matmul_tn_into(grad.dec_wmu, ws.b_kD, ws.dact2, /*accumulate=*/true);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < D; ++i) grad.dec_bmu[i] += ws.b_kD(k, i);
  matmul_into(ws.b_kh2, ws.b_kD, p.dec_wmu);

  // decoder hidden 2
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < ws.b_kh2.cols; ++i)
      ws.b_kh2(k, i) *= lrelu_deriv(ws.dpre2(k, i));
  matmul_tn_into(grad.dec_w2, ws.b_kh2, ws.dact1, /*accumulate=*/true);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < ws.b_kh2.cols; ++i) grad.dec_b2[i] += ws.b_kh2(k, i);
  matmul_into(ws.b_kh1, ws.b_kh2, p.dec_w2);

  // decoder hidden 1
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < ws.b_kh1.cols; ++i)
      ws.b_kh1(k, i) *= lrelu_deriv(ws.dpre1(k, i));
  matmul_tn_into(grad.dec_w1, ws.b_kh1, ws.z, /*accumulate=*/true);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < ws.b_kh1.cols; ++i) grad.dec_b1[i] += ws.b_kh1(k, i);

  // into z: decoder path plus d log p(z)/dz = -z
  matmul_into(ws.d_z, ws.b_kh1, p.dec_w1);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < d; ++j)
      ws.d_z(k, j) -= ws.dlogw[k] * ws.z(k, j);

  // encoder heads: z = mu + sigma*eps, and d log q/d lv = -1/2 per draw
  for (std::size_t j = 0; j < d; ++j) {
    double dmu = 0.0, dlv = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      dmu += ws.d_z(k, j);
      dlv += ws.d_z(k, j) * 0.5 * ws.sigma[j] * ws.eps(k, j);
    }
    dlv += dlogw_sum * 0.5;  // -(-1/2) from log q entering with minus sign
    ws.d_mu[j] = dmu;
    ws.d_lv[j] = dlv * ws.lv_deriv[j];
  }

  // encoder backward
  affine_grad(grad.enc_wmu, grad.enc_bmu, ws.d_mu, ws.act2);
  affine_grad(grad.enc_wlv, grad.enc_blv, ws.d_lv, ws.act2);
  affine_back_input(p.enc_wmu, ws.d_mu, ws.d_act2e);
  {
    std::vector<double>& tmp = ws.d_pre2e;  // reuse as scratch
    affine_back_input(p.enc_wlv, ws.d_lv, tmp);
    for (std::size_t i = 0; i < ws.d_act2e.size(); ++i) ws.d_act2e[i] += tmp[i];
  }
  for (std::size_t i = 0; i < ws.d_act2e.size(); ++i)
    ws.d_pre2e[i] = ws.d_act2e[i] * lrelu_deriv(ws.pre2[i]);
  affine_grad(grad.enc_w2, grad.enc_b2, ws.d_pre2e, ws.act1);
  affine_back_input(p.enc_w2, ws.d_pre2e, ws.d_act1e);
  for (std::size_t i = 0; i < ws.d_act1e.size(); ++i)
    ws.d_pre1e[i] = ws.d_act1e[i] * lrelu_deriv(ws.pre1[i]);
  affine_grad(grad.enc_w1, grad.enc_b1, ws.d_pre1e, x);
}

inline void draw_eps(MlpWorkspace& ws, SeededRng& rng) {
  for (auto& e : ws.eps.data) e = rng.gauss();
}

}  // namespace detail

// ---- losses ----------------------------------------------------------------

// L_IWAE = -(log_sum_exp(log w) - log K), a single Monte-Carlo replicate.
// ws.eps must already hold the K x d standard-normal draws.
inline double iwae_loss_with_eps(const MlpParams& p, std::span<const double> x,
                                 MlpWorkspace& ws) {
  detail::forward_sample(p, x, ws);
  return -(log_sum_exp(ws.logw) - std::log(static_cast<double>(ws.eps.rows)));
}

inline double iwae_loss(const MlpParams& p, std::span<const double> x, std::size_t k,
                        SeededRng& rng, MlpWorkspace& ws) {
  if (k < 1) throw ArgumentError("iwae_loss: K must be >= 1");
  ws.ensure(p.cfg, k);
  detail::draw_eps(ws, rng);
  return iwae_loss_with_eps(p, x, ws);
}

inline double iwae_loss(const MlpParams& p, std::span<const double> x, std::size_t k,
                        SeededRng& rng) {
  MlpWorkspace ws;
  return iwae_loss(p, x, k, rng, ws);
}

inline double vae_loss(const MlpParams& p, std::span<const double> x, SeededRng& rng) {
  return iwae_loss(p, x, 1, rng);
}

// L_CUBO = (log_sum_exp(u * log w) - log K) / u, minimized on labeled outliers
// to push their likelihood upper bound down.
inline double cubo_loss_with_eps(const MlpParams& p, std::span<const double> x,
                                 double u, MlpWorkspace& ws) {
  if (!(u > 1.0)) throw ArgumentError("cubo_loss: u must be > 1");
  detail::forward_sample(p, x, ws);
  const std::size_t k = ws.eps.rows;
  std::vector<double> ulw(k);
  for (std::size_t i = 0; i < k; ++i) ulw[i] = u * ws.logw[i];
  return (log_sum_exp(ulw) - std::log(static_cast<double>(k))) / u;
}

inline double cubo_loss(const MlpParams& p, std::span<const double> x, double u,
                        std::size_t k, SeededRng& rng, MlpWorkspace& ws) {
  if (k < 1) throw ArgumentError("cubo_loss: K must be >= 1");
  ws.ensure(p.cfg, k);
  detail::draw_eps(ws, rng);
  return cubo_loss_with_eps(p, x, u, ws);
}

inline double cubo_loss(const MlpParams& p, std::span<const double> x, double u,
                        std::size_t k, SeededRng& rng) {
  MlpWorkspace ws;
  return cubo_loss(p, x, u, k, rng, ws);
}

// ---- gradients ---------------------------------------------------------------

// Exact pathwise gradient of the K-sample IWAE estimator for the draws in
// ws.eps: dLoss/dlogw_k = -softmax(logw)_k, backpropagated through decoder,
// reparameterized z and encoder. Gradients are ADDED into grad.
inline double iwae_grad_with_eps(const MlpParams& p, std::span<const double> x,
                                 MlpWorkspace& ws, MlpParams& grad) {
  detail::forward_sample(p, x, ws);
  const double lse = log_sum_exp(ws.logw);
  const std::size_t k = ws.eps.rows;
  for (std::size_t i = 0; i < k; ++i)
    ws.dlogw[i] = -std::exp(ws.logw[i] - lse);
  detail::backward_sample(p, x, ws, grad);
  return -(lse - std::log(static_cast<double>(k)));
}

inline double iwae_grad(const MlpParams& p, std::span<const double> x, std::size_t k,
                        SeededRng& rng, MlpParams& grad, MlpWorkspace& ws) {
  if (k < 1) throw ArgumentError("iwae_grad: K must be >= 1");
  ws.ensure(p.cfg, k);
  detail::draw_eps(ws, rng);
  return iwae_grad_with_eps(p, x, ws, grad);
}

inline double iwae_grad(const MlpParams& p, std::span<const double> x, std::size_t k,
                        SeededRng& rng, MlpParams& grad) {
  MlpWorkspace ws;
  return iwae_grad(p, x, k, rng, grad, ws);
}

// Same scheme with weights softmax(u * log w); the CUBO loss enters the total
// objective with a positive sign, so no negation here.
inline double cubo_grad_with_eps(const MlpParams& p, std::span<const double> x,
                                 double u, MlpWorkspace& ws, MlpParams& grad) {
  if (!(u > 1.0)) throw ArgumentError("cubo_grad: u must be > 1");
  detail::forward_sample(p, x, ws);
  const std::size_t k = ws.eps.rows;
  std::vector<double> ulw(k);
  for (std::size_t i = 0; i < k; ++i) ulw[i] = u * ws.logw[i];
  const double lse = log_sum_exp(ulw);
  for (std::size_t i = 0; i < k; ++i) ws.dlogw[i] = std::exp(ulw[i] - lse);
  detail::backward_sample(p, x, ws, grad);
  return (lse - std::log(static_cast<double>(k))) / u;
}

inline double cubo_grad(const MlpParams& p, std::span<const double> x, double u,
                        std::size_t k, SeededRng& rng, MlpParams& grad,
                        MlpWorkspace& ws) {
  if (k < 1) throw ArgumentError("cubo_grad: K must be >= 1");
  ws.ensure(p.cfg, k);
  detail::draw_eps(ws, rng);
  return cubo_grad_with_eps(p, x, u, ws, grad);
}

}  // namespace odim
