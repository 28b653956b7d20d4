#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "odim/mlp.hpp"
#include "odim/rng.hpp"

namespace odim {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::uint64_t t = 0;
  MlpParams m;
  MlpParams v;

  AdamState(MlpConfig shape, AdamConfig c) : cfg(c), m(shape), v(shape) {}
};

// Standard bias-corrected Adam update.
inline void adam_step(AdamState& st, MlpParams& params, const MlpParams& grad) {
  if (!(params.cfg == grad.cfg) || !(params.cfg == st.m.cfg))
    throw ShapeError("adam_step: parameter/gradient shape mismatch");
  st.t += 1;
  const double c1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.t));

  const auto ms = st.m.tensor_spans();
  const auto vs = st.v.tensor_spans();
  const auto ps = params.tensor_spans();
  const auto gs = grad.tensor_spans();
  for (std::size_t ti = 0; ti < MlpParams::kTensorCount; ++ti) {
    auto m = ms[ti];
    auto v = vs[ti];
    auto p = ps[ti];
    auto g = gs[ti];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = st.cfg.beta1 * m[i] + (1.0 - st.cfg.beta1) * g[i];
      v[i] = st.cfg.beta2 * v[i] + (1.0 - st.cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
    }
  }
}

// Per-sample clip-and-noise mechanism. clip_norm C bounds every per-sample
// gradient's l2 norm; noise_mult sigma scales the added Gaussian N(0, s^2 C^2)
// per coordinate, drawn per clipped gradient.
struct DpConfig {
  double clip_norm = 20.0;
  double noise_mult = 1.02;
  std::size_t group_size = 128;  // L, the group averaged per update
};

inline double grad_l2_norm(const MlpParams& g) {
  double s = 0.0;
  g.for_each([&](std::span<const double> t) {
    for (double x : t) s += x * x;
  });
  return std::sqrt(s);
}

// Streaming form of the mechanism: feed per-sample gradients one at a time,
// then finish() returns the noisy group mean. Noise draws happen per sample in
// coordinate order, so the result is bit-identical to dp_sgd_step on the
// materialized list.
class DpAccumulator {
 public:
  DpAccumulator(const DpConfig& cfg, MlpConfig shape, SeededRng* noise_rng)
      : cfg_(cfg), sum_(shape), rng_(noise_rng) {}

  void reset() {
    sum_.fill(0.0);
    count_ = 0;
  }

  void add(const MlpParams& g) {
    const double norm = grad_l2_norm(g);
    double factor = 1.0;
    if (std::isfinite(cfg_.clip_norm)) {
      const double ratio = norm / cfg_.clip_norm;
      if (ratio > 1.0) factor = 1.0 / ratio;
    }
    zip_params(sum_, g, [&](std::span<double> acc, std::span<const double> src) {
      if (factor == 1.0) {
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
      } else {
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += factor * src[i];
      }
    });
    if (cfg_.noise_mult > 0.0) {
      const double scale = cfg_.noise_mult * cfg_.clip_norm;
      sum_.for_each([&](std::span<double> acc) {
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * rng_->gauss();
      });
    }
    ++count_;
  }

  // Mean over the group actually fed in.
  MlpParams finish() const {
    if (count_ == 0) throw ArgumentError("dp_sgd_step: empty group");
    MlpParams out = sum_;
    scale_params(out, 1.0 / static_cast<double>(count_));
    return out;
  }

  std::size_t count() const { return count_; }

 private:
  DpConfig cfg_;
  MlpParams sum_;
  SeededRng* rng_;
  std::size_t count_ = 0;
};

// Clip each gradient to norm <= C, add N(0, sigma^2 C^2) noise per clipped
// gradient, return the mean over the group.
inline MlpParams dp_sgd_step(const DpConfig& cfg, std::span<const MlpParams> grads,
                             SeededRng& rng) {
  if (grads.empty()) throw ArgumentError("dp_sgd_step: empty group");
  DpAccumulator acc(cfg, grads[0].cfg, &rng);
  for (const auto& g : grads) acc.add(g);
  return acc.finish();
}

}  // namespace odim
