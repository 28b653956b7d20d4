#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "odim/matrix.hpp"
#include "odim/mlp.hpp"
#include "odim/numeric.hpp"

namespace odim {

// Sample-batched forward/backward: a chunk of m samples with K latent draws
// each runs through the decoder as one (m*K)-row matrix, which keeps the hot
// loops in large matmuls. Produces per-sample losses and, when requested, the
// SUM over samples of per-sample objective gradients; this is what minibatch
// training needs. Per-sample gradients (for DP clipping) stay on the
// per-sample path in mlp.hpp.

enum class Objective { Iwae, Cubo };

struct BatchWorkspace {
  Matrix xc;                           // m x D gathered chunk
  Matrix e1, e2;                       // m x h encoder activations (in place)
  Matrix mu, lv, lv_deriv, sigma;      // m x d
  Matrix z;                            // (m*K) x d
  Matrix d1, d2;                       // (m*K) x h decoder activations
  Matrix mu_x;                         // (m*K) x D decoder output
  std::vector<double> gamma_eff, gamma_deriv, gamma_einv;  // D
  std::vector<double> logw, dlogw;     // m*K
  // backward scratch
  Matrix b_kD, b_kh, b_kh2, d_zm;      // (m*K) x {D,h,h,d}
  Matrix d_mu, d_lv, d_eh, d_eh2;      // m x d, m x d, m x h, m x h
  // transposed weights; the i-k-j kernel runs the forward pass
  Matrix enc_w1_t, enc_w2_t, enc_wmu_t, enc_wlv_t;
  Matrix dec_w1_t, dec_w2_t, dec_wmu_t;
};

inline constexpr std::size_t kBatchChunk = 16;

namespace detail {

// The rectifier runs in place; it preserves sign, so the backward pass reads
// the derivative mask off the activation itself.
inline void lrelu_inplace(Matrix& a) {
  for (auto& v : a.data) v = lrelu(v);
}

// exp for non-positive arguments via power-of-two range reduction with a
// degree-11 polynomial (~1e-13 relative). Straight-line code: auto-vectorizes
// and stays reproducible.
inline double fast_exp_nonpos(double x) {
  constexpr double kLog2E = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kRoundMagic = 6755399441055744.0;  // 1.5 * 2^52
  x = std::max(x, -708.0);
  const double fn = x * kLog2E + kRoundMagic;
  const std::int64_t bits = std::bit_cast<std::int64_t>(fn);
  const double n = fn - kRoundMagic;
  const double r = (x - n * kLn2Hi) - n * kLn2Lo;
  double p = 1.0 / 39916800.0;  // 1/11!
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const double scale = std::bit_cast<double>((bits + 1023) << 52);
  return p * scale;
}

// Branch-free sigmoid over a buffer.
inline void sigmoid_inplace(Matrix& a) {
  for (auto& t : a.data) {
    const double e = fast_exp_nonpos(-std::abs(t));
    const double s = e / (1.0 + e);
    t = t >= 0.0 ? 1.0 - s : s;
  }
}

inline void colsum_add(std::span<double> out, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* p = m.data.data() + r * m.cols;
    for (std::size_t i = 0; i < m.cols; ++i) out[i] += p[i];
  }
}

// One chunk. rows indexes into data; eps is (m*K) x d sample-major, or K x d
// applied to every sample when shared_eps is set.
inline void batch_chunk(const MlpParams& p, const Matrix& data,
                        std::span<const std::size_t> rows, const Matrix& eps,
                        bool shared_eps, Objective obj, double u,
                        MlpParams* grad_sum, double* losses, BatchWorkspace& ws) {
  const std::size_t m = rows.size();
  const std::size_t D = p.cfg.input_dim, d = p.cfg.latent_dim, h = p.cfg.hidden_dim;
  const std::size_t K = shared_eps ? eps.rows : eps.rows / m;
  const std::size_t krows = m * K;
  const bool sig = (p.cfg.output == OutputAct::Sigmoid);

  // gather
  ws.xc.resize(m, D);
  for (std::size_t i = 0; i < m; ++i) {
    const auto src = data.row(rows[i]);
    std::copy(src.begin(), src.end(), ws.xc.row(i).begin());
  }

  // encoder
  matmul_bias_into(ws.e1, ws.xc, ws.enc_w1_t, p.enc_b1);
  lrelu_inplace(ws.e1);
  matmul_bias_into(ws.e2, ws.e1, ws.enc_w2_t, p.enc_b2);
  lrelu_inplace(ws.e2);
  matmul_bias_into(ws.mu, ws.e2, ws.enc_wmu_t, p.enc_bmu);
  matmul_bias_into(ws.lv, ws.e2, ws.enc_wlv_t, p.enc_blv);
  ws.lv_deriv.resize(m, d);
  ws.sigma.resize(m, d);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      ws.lv(i, j) = clamp_logvar(ws.lv(i, j), &ws.lv_deriv(i, j));
      ws.sigma(i, j) = std::exp(0.5 * ws.lv(i, j));
    }

  // reparameterized draws
  ws.z.resize(krows, d);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      const double* e = shared_eps ? eps.data.data() + k * d
                                   : eps.data.data() + (i * K + k) * d;
      double* zr = ws.z.data.data() + (i * K + k) * d;
      for (std::size_t j = 0; j < d; ++j)
        zr[j] = ws.mu(i, j) + ws.sigma(i, j) * e[j];
    }

  // decoder
  matmul_bias_into(ws.d1, ws.z, ws.dec_w1_t, p.dec_b1);
  lrelu_inplace(ws.d1);
  matmul_bias_into(ws.d2, ws.d1, ws.dec_w2_t, p.dec_b2);
  lrelu_inplace(ws.d2);
  matmul_bias_into(ws.mu_x, ws.d2, ws.dec_wmu_t, p.dec_bmu);
  if (sig) sigmoid_inplace(ws.mu_x);

  ws.gamma_eff.resize(D);
  ws.gamma_deriv.resize(D);
  ws.gamma_einv.resize(D);
  double logdet_x = 0.0;
  for (std::size_t i = 0; i < D; ++i) {
    ws.gamma_eff[i] = clamp_logvar(p.dec_logvar[i], &ws.gamma_deriv[i]);
    ws.gamma_einv[i] = std::exp(-ws.gamma_eff[i]);
    logdet_x += ws.gamma_eff[i];
  }

  // log-weights
  ws.logw.resize(krows);
  const double const_x = -0.5 * static_cast<double>(D) * kLog2Pi - 0.5 * logdet_x;
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = ws.xc.data.data() + i * D;
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t r = i * K + k;
      const double* mx = ws.mu_x.data.data() + r * D;
      double lpx = const_x;
      for (std::size_t f = 0; f < D; ++f) {
        const double res = xi[f] - mx[f];
        lpx -= 0.5 * res * res * ws.gamma_einv[f];
      }
      const double* zr = ws.z.data.data() + r * d;
      const double* e = shared_eps ? eps.data.data() + k * d
                                   : eps.data.data() + r * d;
      double tail = 0.0;  // log p(z) - log q(z|x) without the constants
      for (std::size_t j = 0; j < d; ++j)
        tail += -0.5 * zr[j] * zr[j] + 0.5 * ws.lv(i, j) + 0.5 * e[j] * e[j];
      ws.logw[r] = lpx + tail;
    }
  }

  // per-sample losses and objective weights; CUBO scales the log-weights by u
  const double logk = std::log(static_cast<double>(K));
  const double pw = obj == Objective::Cubo ? u : 1.0;
  ws.dlogw.resize(krows);
  for (std::size_t i = 0; i < m; ++i) {
    const double* lw = ws.logw.data() + i * K;
    double mx = lw[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, lw[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += fast_exp_nonpos(pw * (lw[k] - mx));
    const double lse = pw * mx + std::log(sum);
    if (losses)
      losses[i] = obj == Objective::Iwae ? -(lse - logk) : (lse - logk) / u;
    if (grad_sum) {
      double* dw = ws.dlogw.data() + i * K;
      const double sign = obj == Objective::Iwae ? -1.0 : 1.0;
      for (std::size_t k = 0; k < K; ++k)
        dw[k] = sign * fast_exp_nonpos(pw * lw[k] - lse);
    }
  }
  if (!grad_sum) return;

  // ---- backward ----
  MlpParams& g = *grad_sum;

  // d/d preout and gamma
  ws.b_kD.resize(krows, D);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = ws.xc.data.data() + i * D;
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t r = i * K + k;
      const double w = ws.dlogw[r];
      const double* mx = ws.mu_x.data.data() + r * D;
      double* out = ws.b_kD.data.data() + r * D;
      for (std::size_t f = 0; f < D; ++f) {
        const double res = xi[f] - mx[f];
        double dmu = w * res * ws.gamma_einv[f];
        if (sig) dmu *= mx[f] * (1.0 - mx[f]);
        out[f] = dmu;
        g.dec_logvar[f] +=
            w * (-0.5 + 0.5 * res * res * ws.gamma_einv[f]) * ws.gamma_deriv[f];
      }
    }
  }

  matmul_tn_into(g.dec_wmu, ws.b_kD, ws.d2, /*accumulate=*/true);
  detail::colsum_add(g.dec_bmu, ws.b_kD);
  matmul_into(ws.b_kh, ws.b_kD, p.dec_wmu);

  for (std::size_t t = 0; t < krows * h; ++t)
    ws.b_kh.data[t] *= lrelu_deriv(ws.d2.data[t]);
  matmul_tn_into(g.dec_w2, ws.b_kh, ws.d1, /*accumulate=*/true);
  detail::colsum_add(g.dec_b2, ws.b_kh);
  matmul_into(ws.b_kh2, ws.b_kh, p.dec_w2);

  for (std::size_t t = 0; t < krows * h; ++t)
    ws.b_kh2.data[t] *= lrelu_deriv(ws.d1.data[t]);
  matmul_tn_into(g.dec_w1, ws.b_kh2, ws.z, /*accumulate=*/true);
  detail::colsum_add(g.dec_b1, ws.b_kh2);
  matmul_into(ws.d_zm, ws.b_kh2, p.dec_w1);

  for (std::size_t r = 0; r < krows; ++r) {
    double* dz = ws.d_zm.data.data() + r * d;
    const double* zr = ws.z.data.data() + r * d;
    const double w = ws.dlogw[r];
    for (std::size_t j = 0; j < d; ++j) dz[j] -= w * zr[j];
  }

  // reduce to encoder heads
  ws.d_mu.resize(m, d);
  ws.d_lv.resize(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    double wsum = 0.0;
    for (std::size_t k = 0; k < K; ++k) wsum += ws.dlogw[i * K + k];
    for (std::size_t j = 0; j < d; ++j) {
      double dmu = 0.0, dlv = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t r = i * K + k;
        const double e = shared_eps ? eps(k, j) : eps(r, j);
        dmu += ws.d_zm(r, j);
        dlv += ws.d_zm(r, j) * 0.5 * ws.sigma(i, j) * e;
      }
      dlv += wsum * 0.5;
      ws.d_mu(i, j) = dmu;
      ws.d_lv(i, j) = dlv * ws.lv_deriv(i, j);
    }
  }

  matmul_tn_into(g.enc_wmu, ws.d_mu, ws.e2, /*accumulate=*/true);
  detail::colsum_add(g.enc_bmu, ws.d_mu);
  matmul_tn_into(g.enc_wlv, ws.d_lv, ws.e2, /*accumulate=*/true);
  detail::colsum_add(g.enc_blv, ws.d_lv);

  matmul_into(ws.d_eh, ws.d_mu, p.enc_wmu);
  matmul_into(ws.d_eh, ws.d_lv, p.enc_wlv, /*accumulate=*/true);
  for (std::size_t t = 0; t < m * h; ++t)
    ws.d_eh.data[t] *= lrelu_deriv(ws.e2.data[t]);
  matmul_tn_into(g.enc_w2, ws.d_eh, ws.e1, /*accumulate=*/true);
  detail::colsum_add(g.enc_b2, ws.d_eh);
  matmul_into(ws.d_eh2, ws.d_eh, p.enc_w2);
  for (std::size_t t = 0; t < m * h; ++t)
    ws.d_eh2.data[t] *= lrelu_deriv(ws.e1.data[t]);
  matmul_tn_into(g.enc_w1, ws.d_eh2, ws.xc, /*accumulate=*/true);
  detail::colsum_add(g.enc_b1, ws.d_eh2);
}

}  // namespace detail

// Sum over `rows` of per-sample objective gradients into grad_sum (caller
// zeroes and rescales) plus per-sample losses. eps holds (rows.size()*K) x d
// sample-major draws, or K x d applied to every sample when shared_eps.
// Work proceeds in fixed chunk order, so results are reproducible.
inline void batch_objective(const MlpParams& p, const Matrix& data,
                            std::span<const std::size_t> rows, const Matrix& eps,
                            bool shared_eps, Objective obj, double u,
                            MlpParams* grad_sum, std::vector<double>* losses,
                            BatchWorkspace& ws) {
  const std::size_t m = rows.size();
  if (m == 0) throw ArgumentError("batch_objective: empty row set");
  const std::size_t K = shared_eps ? eps.rows : eps.rows / m;
  if (K < 1 || (!shared_eps && eps.rows != m * K))
    throw ShapeError("batch_objective: eps shape mismatch");
  if (obj == Objective::Cubo && !(u > 1.0))
    throw ArgumentError("batch_objective: CUBO needs u > 1");
  if (losses) losses->resize(m);

  transpose_into(ws.enc_w1_t, p.enc_w1);
  transpose_into(ws.enc_w2_t, p.enc_w2);
  transpose_into(ws.enc_wmu_t, p.enc_wmu);
  transpose_into(ws.enc_wlv_t, p.enc_wlv);
  transpose_into(ws.dec_w1_t, p.dec_w1);
  transpose_into(ws.dec_w2_t, p.dec_w2);
  transpose_into(ws.dec_wmu_t, p.dec_wmu);

  for (std::size_t start = 0; start < m; start += kBatchChunk) {
    const std::size_t len = std::min(kBatchChunk, m - start);
    Matrix eps_view;
    const Matrix* eps_chunk = &eps;
    if (!shared_eps && (start != 0 || len != m)) {
      eps_view.rows = len * K;
      eps_view.cols = eps.cols;
      eps_view.data.assign(eps.data.begin() + start * K * eps.cols,
                           eps.data.begin() + (start + len) * K * eps.cols);
      eps_chunk = &eps_view;
    }
    detail::batch_chunk(p, data, rows.subspan(start, len), *eps_chunk, shared_eps,
                        obj, u, grad_sum, losses ? losses->data() + start : nullptr,
                        ws);
  }
}

}  // namespace odim
