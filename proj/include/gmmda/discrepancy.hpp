/* Copyright 2026 The gmmda Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Distances between source and target prediction distributions: the
// Frechet (2-Wasserstein) distance between univariate Gaussians, the
// component-matched adversarial loss built on it, an empirical
// 1-Wasserstein distance, and the classic domain-discriminator loss.

#ifndef GMMDA_DISCREPANCY_HPP_
#define GMMDA_DISCREPANCY_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "gmmda/autodiff.hpp"
#include "gmmda/gmm.hpp"

namespace gmmda {

struct AdvWeights {
  std::array<double, 2> alpha{1.0, 1.0};
  // Use d_F^2 instead of d_F per component.
  bool squared = false;

  // Both weights zero is accepted and disables the adversarial term.
  void validate() const {
    for (double a : alpha) {
      if (!(a >= 0.0) || !std::isfinite(a)) {
        throw ConfigError("adversarial weights must be finite and >= 0");
      }
    }
  }
};

// d_F between N(mu1, sigma1^2) and N(mu2, sigma2^2):
//   sqrt((mu1 - mu2)^2 + (sigma1 - sigma2)^2)
// Arguments are scalar tensors holding standard deviations. The gradient at
// d_F = 0 is taken to be 0.
inline Tensor frechet(Graph& g, const Tensor& mu1, const Tensor& sigma1, const Tensor& mu2,
                      const Tensor& sigma2, bool squared = false) {
  for (const Tensor* t : {&mu1, &sigma1, &mu2, &sigma2}) {
    if (t->size() != 1) throw DimensionError("frechet expects scalar arguments");
  }
  const double s1 = sigma1.item(), s2 = sigma2.item();
  if (s1 < 0.0 || s2 < 0.0) {
    throw DomainError("frechet: negative standard deviation (" + std::to_string(s1) + ", " +
                      std::to_string(s2) + ")");
  }
  const double dm = mu1.item() - mu2.item();
  const double ds = s1 - s2;
  const double d2 = dm * dm + ds * ds;
  const double d = std::sqrt(d2);
  // d(out)/d(dm) and d(out)/d(ds)
  double gm = 0.0, gs = 0.0;
  if (squared) {
    gm = 2.0 * dm;
    gs = 2.0 * ds;
  } else if (d > 0.0) {
    gm = dm / d;
    gs = ds / d;
  }
  return g.record("frechet", {mu1, sigma1, mu2, sigma2}, Shape{}, {squared ? d2 : d},
                  [gm, gs](std::span<const double> up, std::vector<std::span<double>>& in) {
                    if (!in[0].empty()) in[0][0] += up[0] * gm;
                    if (!in[1].empty()) in[1][0] += up[0] * gs;
                    if (!in[2].empty()) in[2][0] -= up[0] * gm;
                    if (!in[3].empty()) in[3][0] -= up[0] * gs;
                  });
}

// sum_i alpha_i * d_F(target component i, source component i), components
// matched by sorted index. Mixture weights do not enter.
inline Tensor adversarial_loss(Graph& g, const std::array<ComponentMoments, 2>& src,
                               const std::array<ComponentMoments, 2>& tgt,
                               const AdvWeights& w = {}) {
  w.validate();
  Tensor total = g.scale(frechet(g, tgt[0].mean, tgt[0].stddev, src[0].mean, src[0].stddev,
                                 w.squared),
                         w.alpha[0]);
  const Tensor second = g.scale(
      frechet(g, tgt[1].mean, tgt[1].stddev, src[1].mean, src[1].stddev, w.squared),
      w.alpha[1]);
  return g.add(total, second);
}

inline std::array<ComponentMoments, 2> constant_moments(const GmmFit& fit) {
  std::array<ComponentMoments, 2> out;
  for (std::size_t i = 0; i < 2; ++i) {
    out[i] = ComponentMoments{Tensor::scalar(fit.components[i].mean),
                              Tensor::scalar(fit.components[i].stddev())};
  }
  return out;
}

// Loss value between two fitted mixtures (no gradient path).
inline double adversarial_loss(const GmmFit& src, const GmmFit& tgt, const AdvWeights& w = {}) {
  Graph g;
  return adversarial_loss(g, constant_moments(src), constant_moments(tgt), w).item();
}

// Empirical 1-Wasserstein distance by quantile coupling. Both inputs are
// flattened, resampled to m = min(|xs|, |xt|) quantile levels j/(m-1) by
// linear interpolation of their sorted values, and the mean absolute
// difference of matched quantiles is returned. Gradients flow to the sample
// values with the sort order held fixed.
inline Tensor wasserstein1_empirical(Graph& g, const Tensor& xs, const Tensor& xt) {
  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](const Tensor& t, std::size_t m) {
    const auto v = t.values();
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<Tap> out(m);
    const std::size_t n = v.size();
    for (std::size_t j = 0; j < m; ++j) {
      const double q = m == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(m - 1);
      const double pos = q * static_cast<double>(n - 1);
      const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)), n - 1);
      const std::size_t hi = std::min(lo + 1, n - 1);
      out[j] = Tap{order[lo], order[hi], pos - static_cast<double>(lo)};
    }
    return out;
  };
  const std::size_t m = std::min(xs.size(), xt.size());
  const std::vector<Tap> ts = taps(xs, m);
  const std::vector<Tap> tt = taps(xt, m);
  const auto vs = xs.values();
  const auto vt = xt.values();
  auto value = [](std::span<const double> v, const Tap& t) {
    return (1.0 - t.frac) * v[t.lo] + t.frac * v[t.hi];
  };
  std::vector<double> sign(m);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double diff = value(vs, ts[j]) - value(vt, tt[j]);
    total += std::abs(diff);
    sign[j] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  return g.record("wasserstein1", {xs, xt}, Shape{}, {total * inv_m},
                  [ts, tt, sign = std::move(sign), inv_m](std::span<const double> up,
                                                          std::vector<std::span<double>>& in) {
                    for (std::size_t j = 0; j < sign.size(); ++j) {
                      const double gj = up[0] * inv_m * sign[j];
                      if (!in[0].empty()) {
                        in[0][ts[j].lo] += gj * (1.0 - ts[j].frac);
                        in[0][ts[j].hi] += gj * ts[j].frac;
                      }
                      if (!in[1].empty()) {
                        in[1][tt[j].lo] -= gj * (1.0 - tt[j].frac);
                        in[1][tt[j].hi] -= gj * tt[j].frac;
                      }
                    }
                  });
}

// mean_b[-log d_src] + mean_b[-log(1 - d_tgt)], outputs clamped to
// [1e-12, 1 - 1e-12].
inline Tensor discriminator_loss(Graph& g, const Tensor& d_src, const Tensor& d_tgt) {
  if (d_src.shape() != d_tgt.shape() || d_src.rank() != 2 || d_src.dim(1) != 1) {
    throw DimensionError("discriminator_loss expects two [b x 1] tensors, got " +
                         shape_string(d_src.shape()) + " and " + shape_string(d_tgt.shape()));
  }
  constexpr double eps = 1e-12;
  const std::size_t b = d_src.size();
  const auto s = d_src.values();
  const auto t = d_tgt.values();
  std::vector<double> gs(b), gt(b);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double ps = std::clamp(s[i], eps, 1.0 - eps);
    const double pt = std::clamp(t[i], eps, 1.0 - eps);
    total += -std::log(ps) - std::log(1.0 - pt);
    gs[i] = (s[i] < eps || s[i] > 1.0 - eps) ? 0.0 : -1.0 / ps;
    gt[i] = (t[i] < eps || t[i] > 1.0 - eps) ? 0.0 : 1.0 / (1.0 - pt);
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  return g.record("discriminator_loss", {d_src, d_tgt}, Shape{}, {total * inv_b},
                  [gs = std::move(gs), gt = std::move(gt), inv_b](
                      std::span<const double> up, std::vector<std::span<double>>& in) {
                    for (std::size_t i = 0; i < gs.size(); ++i) {
                      if (!in[0].empty()) in[0][i] += up[0] * inv_b * gs[i];
                      if (!in[1].empty()) in[1][i] += up[0] * inv_b * gt[i];
                    }
                  });
}

}  // namespace gmmda

#endif  // GMMDA_DISCREPANCY_HPP_
