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

// Shared test oracles: random differentiable graphs checked against central
// finite differences, brute-force metric loops, and a CLI runner.

#ifndef GMMDA_TESTS_SUPPORT_HPP_
#define GMMDA_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "gmmda/gmmda.hpp"

namespace gmmda::testing {

// |a - n| relative to the larger magnitude, with magnitudes below 1e-2
// compared absolutely against 1e-2.
inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-2});
}

// State shared between the gradient run and the perturbed runs of one
// graph. Non-smooth points are recorded as a margin so cases sitting within
// reach of the finite-difference step can be rejected. EM responsibilities
// and the inputs of gradient-reversal nodes are frozen on the first run and
// replayed afterwards.
struct Probe {
  bool recording = true;
  double margin = std::numeric_limits<double>::infinity();
  double max_abs = 0.0;
  std::vector<FeatureMatrix> fits;
  std::vector<Tensor> frozen;
  std::size_t fit_cursor = 0;
  std::size_t frozen_cursor = 0;

  void kink(double distance) { margin = std::min(margin, std::abs(distance)); }

  void observe(const Tensor& t) {
    for (double v : t.values()) max_abs = std::max(max_abs, std::abs(v));
  }

  void rewind() {
    recording = false;
    fit_cursor = 0;
    frozen_cursor = 0;
  }

  const FeatureMatrix& responsibilities(const Tensor& probs) {
    if (recording) {
      const GmmFit fit = em_fit(pool_logits(probs));
      for (std::size_t c = 0; c < 2; ++c) {
        double total = 0.0;
        for (std::size_t k = 0; k < fit.responsibilities.rows; ++k) {
          total += fit.responsibilities(k, c);
        }
        if (total < 1e-3) kink(0.0);
      }
      fits.push_back(fit.responsibilities);
    }
    return fits.at(fit_cursor++);
  }

  // Gradient run: the real reversal node. Perturbed runs: x0 - lambda (x - x0),
  // whose derivative is what the reversal node promises.
  Tensor reversal(Graph& g, const Tensor& x, double lambda) {
    if (recording) {
      frozen.push_back(x.detach());
      ++frozen_cursor;
      return g.grad_reverse(x, lambda);
    }
    const Tensor& x0 = frozen.at(frozen_cursor++);
    return g.add(x0, g.scale(g.sub(x, x0), -lambda));
  }
};

using Step = std::function<Tensor(Graph&, const Tensor&, const std::vector<Tensor>&, Probe&)>;

struct GraphCase {
  std::vector<Tensor> leaves;
  std::vector<Step> steps;
  std::vector<std::string> ops;

  Tensor run(Graph& g, Probe& probe) const {
    Tensor cur = leaves.front();
    for (const Step& s : steps) {
      cur = s(g, cur, leaves, probe);
      probe.observe(cur);
    }
    return cur;
  }

  std::string describe() const {
    std::string out;
    for (const std::string& op : ops) out += (out.empty() ? "" : " -> ") + op;
    return out;
  }
};

namespace detail {

inline void max_margins(const Tensor& t, std::optional<std::size_t> axis, Probe& probe) {
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  auto scan = [&](std::vector<double> group) {
    if (group.size() < 2) return;
    std::sort(group.begin(), group.end(), std::greater<>());
    probe.kink(group[0] - group[1]);
  };
  if (!axis) {
    scan(std::vector<double>(t.values().begin(), t.values().end()));
  } else if (*axis == 0) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::vector<double> g;
      for (std::size_t r = 0; r < rows; ++r) g.push_back(t.at(r, c));
      scan(g);
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> g;
      for (std::size_t c = 0; c < cols; ++c) g.push_back(t.at(r, c));
      scan(g);
    }
  }
}

inline std::vector<double> quantile_taps(std::span<const double> v, std::size_t m) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  std::vector<double> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double q = m == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(m - 1);
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    out[j] = s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
  }
  return out;
}

inline void sort_margins(std::span<const double> v, Probe& probe) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  for (std::size_t i = 1; i < s.size(); ++i) probe.kink(s[i] - s[i - 1]);
}

}  // namespace detail

// One random graph of at most `max_depth` ops over matrices with dimensions
// up to `max_dim`, ending in a scalar loss. Returns nullopt when the draw
// lands too close to a non-smooth point or overflows.
inline std::optional<GraphCase> try_random_case(Rng& rng, std::size_t max_depth = 6,
                                                std::size_t max_dim = 8) {
  GraphCase gc;
  auto dim = [&] { return static_cast<std::size_t>(1 + rng.below(max_dim)); };
  auto leaf = [&](Shape s) {
    std::vector<double> v(shape_size(s));
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    gc.leaves.emplace_back(std::move(s), std::move(v), true);
    return gc.leaves.size() - 1;
  };
  auto constant = [&](Shape s, double lo, double hi) {
    std::vector<double> v(shape_size(s));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(s), std::move(v));
  };
  std::size_t r = dim(), c = dim();
  leaf({r, c});
  const std::size_t depth = 1 + rng.below(max_depth);

  for (std::size_t d = 0; d + 1 < depth; ++d) {
    switch (rng.below(15)) {
      case 0:
        gc.ops.push_back("relu");
        gc.steps.push_back([](Graph& g, const Tensor& x, const auto&, Probe& p) {
          for (double v : x.values()) p.kink(v);
          return g.relu(x);
        });
        break;
      case 1:
        gc.ops.push_back("sigmoid");
        gc.steps.push_back([](Graph& g, const Tensor& x, const auto&, Probe&) { return g.sigmoid(x); });
        break;
      case 2: {
        gc.ops.push_back("log");
        const Tensor off = Tensor::scalar(rng.uniform(0.2, 1.0));
        gc.steps.push_back([off](Graph& g, const Tensor& x, const auto&, Probe&) {
          return g.log(g.add(g.square(x), off));
        });
        break;
      }
      case 3:
        gc.ops.push_back("exp");
        gc.steps.push_back([](Graph& g, const Tensor& x, const auto&, Probe&) {
          return g.exp(g.scale(x, 0.5));
        });
        break;
      case 4: {
        gc.ops.push_back("sqrt");
        const Tensor off = Tensor::scalar(rng.uniform(0.1, 1.0));
        gc.steps.push_back([off](Graph& g, const Tensor& x, const auto&, Probe&) {
          return g.sqrt(g.add(g.square(x), off));
        });
        break;
      }
      case 5:
        gc.ops.push_back("square");
        gc.steps.push_back([](Graph& g, const Tensor& x, const auto&, Probe&) { return g.square(x); });
        break;
      case 6:
        gc.ops.push_back("negate");
        gc.steps.push_back([](Graph& g, const Tensor& x, const auto&, Probe&) { return g.negate(x); });
        break;
      case 7: {
        gc.ops.push_back("clamp_min");
        const double lo = rng.uniform(-0.5, 0.5);
        gc.steps.push_back([lo](Graph& g, const Tensor& x, const auto&, Probe& p) {
          for (double v : x.values()) p.kink(v - lo);
          return g.clamp_min(x, lo);
        });
        break;
      }
      case 8: {
        gc.ops.push_back("scale");
        const double k = rng.uniform(-2.0, 2.0);
        gc.steps.push_back([k](Graph& g, const Tensor& x, const auto&, Probe&) { return g.scale(x, k); });
        break;
      }
      case 9: {
        gc.ops.push_back("grad_reverse");
        const double lambda = rng.uniform(0.0, 2.0);
        gc.steps.push_back([lambda](Graph& g, const Tensor& x, const auto&, Probe& p) {
          return p.reversal(g, x, lambda);
        });
        break;
      }
      case 10:
        gc.ops.push_back("reshape");
        gc.steps.push_back([r, c](Graph& g, const Tensor& x, const auto&, Probe&) {
          return g.reshape(x, Shape{c, r});
        });
        std::swap(r, c);
        break;
      case 11: {
        const std::size_t other = leaf({r, c});
        const std::size_t kind = rng.below(3);
        const bool flip = rng.bernoulli(0.5);
        gc.ops.push_back(kind == 0 ? "add" : kind == 1 ? "sub" : "mul");
        gc.steps.push_back([other, kind, flip](Graph& g, const Tensor& x, const auto& leaves, Probe&) {
          const Tensor& a = flip ? leaves[other] : x;
          const Tensor& b = flip ? x : leaves[other];
          return kind == 0 ? g.add(a, b) : kind == 1 ? g.sub(a, b) : g.mul(a, b);
        });
        break;
      }
      case 12: {
        const std::size_t k = dim();
        const std::size_t w = leaf({c, k});
        gc.ops.push_back("matmul");
        gc.steps.push_back([w](Graph& g, const Tensor& x, const auto& leaves, Probe&) {
          return g.matmul(x, leaves[w]);
        });
        c = k;
        break;
      }
      case 13: {
        const std::size_t kind = rng.below(3);
        const std::size_t ax = rng.below(3);
        const std::optional<std::size_t> axis =
            ax == 2 ? std::nullopt : std::optional<std::size_t>(ax);
        const Shape out = !axis ? Shape{1, 1} : *axis == 0 ? Shape{1, c} : Shape{r, 1};
        gc.ops.push_back(std::string(kind == 0 ? "sum" : kind == 1 ? "mean" : "max") +
                         (axis ? "/" + std::to_string(*axis) : ""));
        gc.steps.push_back([kind, axis, out](Graph& g, const Tensor& x, const auto&, Probe& p) {
          if (kind == 2) detail::max_margins(x, axis, p);
          const Tensor y = kind == 0 ? g.sum(x, axis) : kind == 1 ? g.mean(x, axis) : g.max(x, axis);
          return g.reshape(y, out);
        });
        r = out[0];
        c = out[1];
        break;
      }
      default: {
        const std::size_t s = leaf({});
        gc.ops.push_back("add_scalar");
        gc.steps.push_back([s](Graph& g, const Tensor& x, const auto& leaves, Probe&) {
          return g.add(x, leaves[s]);
        });
        break;
      }
    }
  }

  switch (rng.below(7)) {
    case 0: {
      gc.ops.push_back("weighted_sum");
      const Tensor w = constant({r, c}, -1.0, 1.0);
      gc.steps.push_back([w](Graph& g, const Tensor& x, const auto&, Probe&) {
        return g.sum(g.mul(x, w));
      });
      break;
    }
    case 1: {
      gc.ops.push_back("asl");
      LabelMatrix y(r, c);
      for (auto& v : y.data) v = rng.bernoulli(0.4) ? 1 : 0;
      const std::size_t pick = rng.below(3);
      AslConfig cfg = pick == 0 ? AslConfig{} : pick == 1 ? AslConfig::bce()
                                : AslConfig{rng.uniform(0.0, 2.0), rng.uniform(0.0, 5.0),
                                            rng.uniform(0.0, 0.2)};
      gc.steps.push_back([y, cfg](Graph& g, const Tensor& x, const auto&, Probe& p) {
        const Tensor probs = g.sigmoid(x);
        if (cfg.clip > 0.0) {
          for (std::size_t i = 0; i < y.data.size(); ++i) {
            if (y.data[i] == 0) p.kink(probs[i] - cfg.clip);
          }
        }
        return asl_loss(g, probs, y, cfg);
      });
      break;
    }
    case 2: {
      const bool use_max = rng.bernoulli(0.5);
      gc.ops.push_back(use_max ? "max" : "mean");
      gc.steps.push_back([use_max](Graph& g, const Tensor& x, const auto&, Probe& p) {
        if (use_max) detail::max_margins(x, std::nullopt, p);
        return use_max ? g.max(x) : g.mean(x);
      });
      break;
    }
    case 3: {
      if (r * c < kMinPooledSamples) return std::nullopt;
      const std::size_t other = leaf({r, c});
      AdvWeights w{{rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)}, rng.bernoulli(0.5)};
      gc.ops.push_back(w.squared ? "gmm_frechet_sq" : "gmm_frechet");
      gc.steps.push_back([other, w](Graph& g, const Tensor& x, const auto& leaves, Probe& p) {
        const Tensor ps = g.sigmoid(x);
        const Tensor pt = g.sigmoid(g.add(x, leaves[other]));
        const auto ms = differentiable_moments(g, ps, p.responsibilities(ps));
        const auto mt = differentiable_moments(g, pt, p.responsibilities(pt));
        for (const auto* m : {&ms, &mt}) {
          for (const ComponentMoments& cm : *m) {
            p.kink(cm.stddev.item() * cm.stddev.item() - EmConfig{}.variance_floor);
          }
        }
        for (std::size_t i = 0; i < 2; ++i) {
          p.kink(std::hypot(ms[i].mean.item() - mt[i].mean.item(),
                            ms[i].stddev.item() - mt[i].stddev.item()));
        }
        return adversarial_loss(g, ms, mt, w);
      });
      break;
    }
    case 4: {
      if (r * c > 16) return std::nullopt;
      const std::size_t other = leaf({1 + rng.below(16), 1});
      gc.ops.push_back("wasserstein1");
      gc.steps.push_back([other](Graph& g, const Tensor& x, const auto& leaves, Probe& p) {
        const Tensor a = g.sigmoid(x);
        const Tensor b = g.sigmoid(leaves[other]);
        detail::sort_margins(a.values(), p);
        detail::sort_margins(b.values(), p);
        const std::size_t m = std::min(a.size(), b.size());
        const auto qa = detail::quantile_taps(a.values(), m);
        const auto qb = detail::quantile_taps(b.values(), m);
        for (std::size_t j = 0; j < m; ++j) p.kink(qa[j] - qb[j]);
        return wasserstein1_empirical(g, a, b);
      });
      break;
    }
    case 5: {
      const std::size_t w = leaf({c, 1});
      const std::size_t xt = leaf({r, c});
      gc.ops.push_back("discriminator_loss");
      gc.steps.push_back([w, xt](Graph& g, const Tensor& x, const auto& leaves, Probe&) {
        const Tensor ds = g.sigmoid(g.matmul(x, leaves[w]));
        const Tensor dt = g.sigmoid(g.matmul(leaves[xt], leaves[w]));
        return discriminator_loss(g, ds, dt);
      });
      break;
    }
    default: {
      const std::size_t mu = leaf({});
      const std::size_t sd = leaf({});
      const bool squared = rng.bernoulli(0.5);
      gc.ops.push_back(squared ? "frechet_sq" : "frechet");
      gc.steps.push_back([mu, sd, squared](Graph& g, const Tensor& x, const auto& leaves, Probe& p) {
        const Tensor m1 = g.mean(x);
        const Tensor s1 = g.sigmoid(g.sum(x));
        const Tensor s2 = g.exp(leaves[sd]);
        p.kink(std::hypot(m1.item() - leaves[mu].item(), s1.item() - s2.item()));
        return frechet(g, m1, s1, leaves[mu], s2, squared);
      });
      break;
    }
  }
  return gc;
}

// Draws until a case is comfortably away from every non-smooth point.
inline GraphCase random_case(Rng& rng, std::size_t max_depth = 6, std::size_t max_dim = 8,
                             double min_margin = 1e-3) {
  while (true) {
    std::optional<GraphCase> gc = try_random_case(rng, max_depth, max_dim);
    if (!gc) continue;
    try {
      Probe probe;
      Graph g;
      const Tensor loss = gc->run(g, probe);
      if (probe.margin >= min_margin && probe.max_abs <= 50.0 && std::isfinite(loss.item())) {
        return *gc;
      }
    } catch (const Error&) {
    }
  }
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

// Reverse-mode gradients of every leaf against central differences.
inline GradCheck check_gradients(GraphCase& gc, double h = 1e-5) {
  for (Tensor& t : gc.leaves) t.zero_grad();
  Probe probe;
  Graph g;
  g.backward(gc.run(g, probe));
  probe.rewind();
  auto eval = [&] {
    probe.fit_cursor = 0;
    probe.frozen_cursor = 0;
    Graph fresh;
    return gc.run(fresh, probe).item();
  };
  GradCheck out;
  for (Tensor& t : gc.leaves) {
    const std::vector<double> analytic =
        t.grad() ? *t.grad() : std::vector<double>(t.size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      double& x = t.mutable_values()[i];
      const double x0 = x;
      x = x0 + h;
      const double fp = eval();
      x = x0 - h;
      const double fm = eval();
      x = x0;
      out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic[i], (fp - fm) / (2.0 * h)));
      ++out.entries;
    }
  }
  return out;
}

// Non-interpolated AP straight from the definition: for every positive, the
// fraction of positives among items ranked at or above it (ties broken by
// index). Terms are summed best rank first.
inline std::optional<double> ap_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  const std::size_t n = s.size();
  std::vector<std::pair<int, double>> terms;
  for (std::size_t i = 0; i < n; ++i) {
    if (!y[i]) continue;
    int rank = 0, hits = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (s[j] > s[i] || (s[j] == s[i] && j <= i)) {
        ++rank;
        hits += y[j];
      }
    }
    terms.emplace_back(rank, static_cast<double>(hits) / rank);
  }
  if (terms.empty()) return std::nullopt;
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (const auto& t : terms) sum += t.second;
  return sum / static_cast<double>(terms.size());
}

struct MetricsOracle {
  double map = 0, cp = 0, cr = 0, cf1 = 0, op = 0, or_ = 0, of1 = 0;
};

// Counts everything in nested loops. Classes without a positive label are
// left out of the per-class averages.
inline MetricsOracle metrics_oracle(const Matrix<double>& p, const LabelMatrix& y, double tau) {
  auto f1 = [](double a, double b) { return a + b > 0 ? 2 * a * b / (a + b) : 0.0; };
  double ap_sum = 0.0, cp = 0.0, cr = 0.0, cf = 0.0;
  int classes = 0;
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < p.cols; ++c) {
    std::vector<double> s;
    std::vector<int> t;
    long ctp = 0, cfp = 0, cfn = 0;
    for (std::size_t i = 0; i < p.rows; ++i) {
      s.push_back(p(i, c));
      t.push_back(y(i, c));
      const bool pred = p(i, c) > tau;
      ctp += pred && y(i, c);
      cfp += pred && !y(i, c);
      cfn += !pred && y(i, c);
    }
    tp += ctp;
    fp += cfp;
    fn += cfn;
    const auto ap = ap_oracle(s, t);
    if (!ap) continue;
    ++classes;
    ap_sum += *ap;
    const double prec = ctp + cfp > 0 ? static_cast<double>(ctp) / (ctp + cfp) : 0.0;
    const double rec = static_cast<double>(ctp) / (ctp + cfn);
    cp += prec;
    cr += rec;
    cf += f1(prec, rec);
  }
  MetricsOracle m;
  if (classes > 0) {
    m.map = ap_sum / classes;
    m.cp = cp / classes;
    m.cr = cr / classes;
    m.cf1 = cf / classes;
  }
  m.op = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.or_ = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.of1 = f1(m.op, m.or_);
  return m;
}

// A random probs/labels instance; scores are quantised when `ties` is set.
inline std::pair<Matrix<double>, LabelMatrix> random_instance(Rng& rng, std::size_t rows,
                                                              std::size_t cols, bool ties) {
  Matrix<double> p(rows, cols);
  LabelMatrix y(rows, cols);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    y.data[i] = rng.bernoulli(0.3) ? 1 : 0;
    const double s = 1.0 / (1.0 + std::exp(-(y.data[i] ? 0.6 : -0.6) - 1.2 * rng.normal()));
    p.data[i] = ties ? std::round(s * 8) / 8 + 1e-3 : s;
  }
  return {p, y};
}

// Seeded draws from 0.5 N(mu1, sigma^2) + 0.5 N(mu2, sigma^2).
inline std::vector<double> two_gaussian_samples(std::uint64_t seed, std::size_t n, double mu1,
                                                double mu2, double sigma) {
  Rng rng = Rng::stream(seed, "two-gaussian");
  std::vector<double> xs(n);
  for (double& x : xs) x = rng.bernoulli(0.5) ? rng.normal(mu2, sigma) : rng.normal(mu1, sigma);
  return xs;
}

// Mixed shapes: Gaussian pairs, squashed logits, uniform and near-atomic data.
inline std::vector<double> em_samples(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "em-property");
  const std::size_t n = kMinPooledSamples + rng.below(600);
  std::vector<double> xs(n);
  switch (seed % 4) {
    case 0: {
      const double m1 = rng.uniform(-1, 1), m2 = rng.uniform(-1, 1);
      const double s1 = rng.uniform(0.01, 0.5), s2 = rng.uniform(0.01, 0.5), w = rng.uniform(0.1, 0.9);
      for (double& x : xs) x = rng.bernoulli(w) ? rng.normal(m1, s1) : rng.normal(m2, s2);
      break;
    }
    case 1:
      for (double& x : xs) x = 1.0 / (1.0 + std::exp(-3.0 * rng.normal(rng.bernoulli(0.3) ? 1 : -1, 1)));
      break;
    case 2:
      for (double& x : xs) x = rng.uniform();
      break;
    default:
      for (double& x : xs) x = std::round(rng.uniform(0, 4)) / 4.0 + rng.normal(0, 1e-3);
      break;
  }
  return xs;
}

struct GridPoint {
  double mu1, mu2, sigma, log_likelihood;
};

// Exhaustive maximum-likelihood search over an equal-weight, shared-sigma
// lattice; `steps` points per axis centred on the given values.
inline GridPoint grid_mle(const std::vector<double>& xs, double mu1, double mu2, double sigma,
                          double half_width, std::size_t steps) {
  auto axis = [&](double centre) {
    std::vector<double> a(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      a[i] = centre - half_width + 2.0 * half_width * static_cast<double>(i) /
                                       static_cast<double>(steps - 1);
    }
    return a;
  };
  const auto a1 = axis(mu1), a2 = axis(mu2), as = axis(sigma);
  GridPoint best{0, 0, 0, -std::numeric_limits<double>::infinity()};
  const std::size_t n = xs.size();
  std::vector<double> p1(steps * n), p2(steps * n);
  for (double s : as) {
    const double norm = 1.0 / (s * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t i = 0; i < steps; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double d1 = (xs[k] - a1[i]) / s, d2 = (xs[k] - a2[i]) / s;
        p1[i * n + k] = norm * std::exp(-0.5 * d1 * d1);
        p2[i * n + k] = norm * std::exp(-0.5 * d2 * d2);
      }
    }
    for (std::size_t i = 0; i < steps; ++i) {
      for (std::size_t j = 0; j < steps; ++j) {
        double ll = 0.0;
        for (std::size_t k = 0; k < n; ++k) ll += std::log(0.5 * p1[i * n + k] + 0.5 * p2[j * n + k]);
        if (ll > best.log_likelihood) best = {a1[i], a2[j], s, ll};
      }
    }
  }
  return best;
}

// Minimum-cost perfect matching (Hungarian algorithm, O(n^3)) on
// |xs_i - xt_j|, divided by n: the optimal-transport cost between two
// equal-size empirical measures.
inline double assignment_w1(const std::vector<double>& xs, const std::vector<double>& xt) {
  const std::size_t n = xs.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = std::abs(xs[i0 - 1] - xt[j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double cost = 0.0;
  for (std::size_t j = 1; j <= n; ++j) cost += std::abs(xs[match[j] - 1] - xt[j - 1]);
  return cost / static_cast<double>(n);
}

struct CliResult {
  int exit_code = -1;
  std::string out;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) out += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return out + "'";
}

// Runs the CLI with stdout captured and stderr discarded.
inline CliResult run_cli(const std::string& cli, const std::vector<std::string>& args,
                         const std::filesystem::path& scratch) {
  std::filesystem::create_directories(scratch);
  const std::filesystem::path out = scratch / "stdout.txt";
  std::string cmd = shell_quote(cli);
  for (const std::string& a : args) cmd += " " + shell_quote(a);
  cmd += " > " + shell_quote(out.string()) + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  return r;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("gmmda_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace gmmda::testing

#endif  // GMMDA_TESTS_SUPPORT_HPP_
