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

// Two-component univariate Gaussian mixture fitted by EM on pooled
// classifier probabilities, plus the bridge that recomputes the component
// moments inside a Graph with the EM responsibilities held fixed.

#ifndef GMMDA_GMM_HPP_
#define GMMDA_GMM_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmmda/autodiff.hpp"
#include "gmmda/matrix.hpp"

namespace gmmda {

inline constexpr std::size_t kMinPooledSamples = 8;

// Raised when a batch has too few pooled samples for a stable fit.
class FitSkipped : public Error {
 public:
  using Error::Error;
};

struct EmConfig {
  std::size_t max_iters = 100;
  double tol = 1e-6;
  double variance_floor = 1e-6;

  void validate() const {
    if (max_iters < 1) throw ConfigError("em.max_iters must be >= 1");
    if (!(tol > 0.0)) throw ConfigError("em.tol must be > 0");
    if (!(variance_floor > 0.0)) throw ConfigError("em.variance_floor must be > 0");
  }
};

struct GaussianComponent {
  double weight = 0.5;
  double mean = 0.0;
  double variance = 1.0;

  double stddev() const { return std::sqrt(variance); }
};

struct GmmFit {
  // Ascending by mean: [0] is the cluster near 0, [1] the cluster near 1.
  std::array<GaussianComponent, 2> components;
  // n x 2; the responsibilities that produced `components` in the final
  // M-step, columns in the same (sorted) order.
  FeatureMatrix responsibilities;
  double log_likelihood = 0.0;
  // Log-likelihood after initialisation and after every M-step.
  std::vector<double> log_likelihood_trace;
  std::size_t iterations = 0;
  bool converged = false;
  bool degenerate = false;
};

// Flattens a b x N probability matrix row-major. Throws FitSkipped when fewer
// than kMinPooledSamples values are available.
inline std::vector<double> pool_logits(const Tensor& probs) {
  if (probs.size() < kMinPooledSamples) {
    throw FitSkipped("pool_logits: " + std::to_string(probs.size()) +
                     " samples, need at least " + std::to_string(kMinPooledSamples));
  }
  return {probs.values().begin(), probs.values().end()};
}

namespace detail {

// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double log_normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - d * d / (2.0 * variance);
}

// Fills `resp` (n x 2) and returns the total log-likelihood.
inline double e_step(std::span<const double> xs,
                     const std::array<GaussianComponent, 2>& comps,
                     FeatureMatrix& resp) {
  double ll = 0.0;
  const double lw0 = std::log(comps[0].weight);
  const double lw1 = std::log(comps[1].weight);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double a = lw0 + log_normal_pdf(xs[k], comps[0].mean, comps[0].variance);
    const double b = lw1 + log_normal_pdf(xs[k], comps[1].mean, comps[1].variance);
    const double m = std::max(a, b);
    const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    const double r0 = std::exp(a - lse);
    resp(k, 0) = r0;
    resp(k, 1) = 1.0 - r0;
    ll += lse;
  }
  return ll;
}

// Weighted mean and variance of one responsibility column, with the same
// summation order as differentiable_moments.
inline std::pair<double, double> weighted_moments(std::span<const double> xs,
                                                  const FeatureMatrix& resp,
                                                  std::size_t col, double total) {
  double sx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) sx += xs[k] * resp(k, col);
  const double mean = sx * (1.0 / total);
  double sv = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double d = xs[k] - mean;
    sv += d * d * resp(k, col);
  }
  return {mean, sv * (1.0 / total)};
}

}  // namespace detail

// Fits w1 N(mu1, var1) + w2 N(mu2, var2) by EM.
//
// Initialisation: means at the 25th/75th percentiles (min/max if those
// coincide), both variances at the floored sample variance, equal weights.
// Iterates M-step then E-step until the log-likelihood changes by less than
// cfg.tol or cfg.max_iters M-steps ran. Variances are clamped below at
// cfg.variance_floor, which keeps each M-step an exact constrained maximiser
// and the log-likelihood non-decreasing.
inline GmmFit em_fit(std::span<const double> samples, const EmConfig& cfg = {}) {
  cfg.validate();
  if (samples.size() < kMinPooledSamples) {
    throw FitSkipped("em_fit: " + std::to_string(samples.size()) +
                     " samples, need at least " + std::to_string(kMinPooledSamples));
  }
  if (!all_finite(samples)) throw NumericError("em_fit: non-finite sample");

  const std::size_t n = samples.size();
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());

  GmmFit fit;
  fit.responsibilities = FeatureMatrix(n, 2);
  FeatureMatrix& resp = fit.responsibilities;

  if (sorted.front() == sorted.back()) {
    const double x = sorted.front();
    fit.components = {GaussianComponent{0.5, x, cfg.variance_floor},
                      GaussianComponent{0.5, x, cfg.variance_floor}};
    fit.log_likelihood = detail::e_step(samples, fit.components, resp);
    fit.log_likelihood_trace = {fit.log_likelihood};
    fit.converged = true;
    fit.degenerate = true;
    return fit;
  }

  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : samples) var += (x - mean) * (x - mean);
  var = std::max(var / static_cast<double>(n), cfg.variance_floor);

  double lo = detail::quantile_sorted(sorted, 0.25);
  double hi = detail::quantile_sorted(sorted, 0.75);
  if (lo == hi) {
    lo = sorted.front();
    hi = sorted.back();
  }
  std::array<GaussianComponent, 2> comps{GaussianComponent{0.5, lo, var},
                                         GaussianComponent{0.5, hi, var}};

  double ll = detail::e_step(samples, comps, resp);
  fit.log_likelihood_trace.push_back(ll);
  FeatureMatrix next(n, 2);
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    for (std::size_t c = 0; c < 2; ++c) {
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) total += resp(k, c);
      if (total <= 0.0) continue;  // component lost all mass; keep it in place
      const auto [m, v] = detail::weighted_moments(samples, resp, c, total);
      comps[c] = GaussianComponent{total / static_cast<double>(n), m,
                                   std::max(v, cfg.variance_floor)};
    }
    const double new_ll = detail::e_step(samples, comps, next);
    fit.log_likelihood_trace.push_back(new_ll);
    fit.iterations = it;
    const bool done = std::abs(new_ll - ll) < cfg.tol;
    ll = new_ll;
    if (done) {
      fit.converged = true;
      break;
    }
    if (it < cfg.max_iters) std::swap(resp, next);
  }
  fit.log_likelihood = ll;

  if (comps[1].mean < comps[0].mean) {
    std::swap(comps[0], comps[1]);
    for (std::size_t k = 0; k < n; ++k) std::swap(resp(k, 0), resp(k, 1));
  }
  fit.components = comps;
  return fit;
}

struct ComponentMoments {
  Tensor mean;
  Tensor stddev;
};

// Recomputes both component means and standard deviations from `probs`
// inside the graph, with `responsibilities` (n x 2, from em_fit on the same
// pooled values) held constant:
//   mu_i = sum_k r_ki x_k / sum_k r_ki
//   sigma_i = sqrt(max(sum_k r_ki (x_k - mu_i)^2 / sum_k r_ki, floor))
inline std::array<ComponentMoments, 2> differentiable_moments(
    Graph& g, const Tensor& probs, const FeatureMatrix& responsibilities,
    double variance_floor = EmConfig{}.variance_floor) {
  const std::size_t n = probs.size();
  if (responsibilities.rows != n || responsibilities.cols != 2) {
    throw DimensionError("differentiable_moments: responsibilities must be " +
                         std::to_string(n) + "x2");
  }
  const Tensor x = g.reshape(probs, Shape{n});
  std::array<ComponentMoments, 2> out;
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> col(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      col[k] = responsibilities(k, c);
      total += col[k];
    }
    if (total < 1e-8) {
      throw DomainError("differentiable_moments: component " + std::to_string(c) +
                        " has total responsibility " + std::to_string(total));
    }
    const Tensor r = Tensor::vector(std::move(col));
    const Tensor mu = g.scale(g.sum(g.mul(x, r)), 1.0 / total);
    const Tensor dev = g.sub(x, mu);
    const Tensor var = g.scale(g.sum(g.mul(g.square(dev), r)), 1.0 / total);
    out[c] = ComponentMoments{mu, g.sqrt(g.clamp_min(var, variance_floor))};
  }
  return out;
}

}  // namespace gmmda

#endif  // GMMDA_GMM_HPP_
