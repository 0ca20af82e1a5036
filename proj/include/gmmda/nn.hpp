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

// Model (feature extractor + classifier head), the asymmetric multi-label
// loss, and Adam with cosine learning-rate decay.

#ifndef GMMDA_NN_HPP_
#define GMMDA_NN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gmmda/autodiff.hpp"
#include "gmmda/matrix.hpp"
#include "gmmda/rng.hpp"

namespace gmmda {

inline Tensor to_tensor(const FeatureMatrix& m) {
  return Tensor::matrix(m.rows, m.cols, m.data);
}

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  // Glorot-uniform weights, zero bias.
  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(in * out);
    for (double& x : w) x = rng.uniform(-limit, limit);
    return Linear{Tensor::matrix(in, out, std::move(w), true),
                  Tensor::zeros(Shape{out}, true)};
  }
};

// x * W + b. The bias row is broadcast through a ones-column matmul.
inline Tensor linear(Graph& g, const Linear& layer, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != layer.in_dim()) {
    throw DimensionError("linear layer expects [b x " +
                         std::to_string(layer.in_dim()) + "], got " +
                         shape_string(x.shape()));
  }
  const Tensor ones = Tensor::filled(Shape{x.dim(0), 1}, 1.0);
  const Tensor bias_row = g.reshape(layer.bias, Shape{1, layer.out_dim()});
  return g.add(g.matmul(x, layer.weight), g.matmul(ones, bias_row));
}

struct Model {
  std::vector<Linear> feature_layers;  // f_g; relu between layers, none after the last
  Linear head;                         // f_c; followed by sigmoid

  std::size_t input_dim() const { return feature_layers.front().in_dim(); }
  std::size_t feature_dim() const { return feature_layers.back().out_dim(); }
  std::size_t num_classes() const { return head.out_dim(); }

  static Model create(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                      std::size_t num_classes, std::uint64_t seed) {
    if (hidden.empty()) throw ConfigError("model needs at least one feature layer");
    if (input_dim == 0 || num_classes == 0) throw ConfigError("model dims must be positive");
    Rng rng = Rng::stream(seed, "model-init");
    Model m;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
      if (h == 0) throw ConfigError("hidden width must be positive");
      m.feature_layers.push_back(Linear::init(in, h, rng));
      in = h;
    }
    m.head = Linear::init(in, num_classes, rng);
    return m;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> ps;
    for (const Linear& l : feature_layers) {
      ps.push_back(l.weight);
      ps.push_back(l.bias);
    }
    ps.push_back(head.weight);
    ps.push_back(head.bias);
    return ps;
  }

  std::vector<Tensor> head_parameters() const { return {head.weight, head.bias}; }

  // Throws if layer dimensions do not chain.
  void validate() const {
    if (feature_layers.empty()) throw DimensionError("model has no feature layers");
    auto check = [](const Linear& l) {
      if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.dim(0) != l.out_dim()) {
        throw DimensionError("malformed linear layer " + shape_string(l.weight.shape()) +
                             " / " + shape_string(l.bias.shape()));
      }
    };
    for (std::size_t i = 0; i < feature_layers.size(); ++i) {
      check(feature_layers[i]);
      if (i > 0 && feature_layers[i].in_dim() != feature_layers[i - 1].out_dim()) {
        throw DimensionError("feature layer " + std::to_string(i) + " does not chain");
      }
    }
    check(head);
    if (head.in_dim() != feature_dim()) throw DimensionError("head does not chain to features");
  }

  // Deep copy; the copy shares no storage with *this.
  Model clone() const { return copy_with_grad(true); }

  // Deep copy whose parameters do not require gradients, so forward passes
  // record nothing on the graph.
  Model detached() const { return copy_with_grad(false); }

 private:
  Model copy_with_grad(bool requires_grad) const {
    auto copy = [requires_grad](const Linear& l) {
      return Linear{Tensor(l.weight.shape(), {l.weight.values().begin(), l.weight.values().end()},
                           requires_grad),
                    Tensor(l.bias.shape(), {l.bias.values().begin(), l.bias.values().end()},
                           requires_grad)};
    };
    Model m;
    for (const Linear& l : feature_layers) m.feature_layers.push_back(copy(l));
    m.head = copy(head);
    return m;
  }
};

// f_g: b x D -> b x d.
inline Tensor forward_features(Graph& g, const Model& model, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != model.input_dim()) {
    throw DimensionError("forward_features expects [b x " +
                         std::to_string(model.input_dim()) + "], got " +
                         shape_string(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < model.feature_layers.size(); ++i) {
    h = linear(g, model.feature_layers[i], h);
    if (i + 1 < model.feature_layers.size()) h = g.relu(h);
  }
  return h;
}

// f_c: b x d -> per-class probabilities in (0,1). With `grl_lambda` the
// features first pass through a gradient-reversal node (adversarial path).
inline Tensor forward_logits(Graph& g, const Model& model, const Tensor& feats,
                             std::optional<double> grl_lambda = std::nullopt) {
  if (feats.rank() != 2 || feats.dim(1) != model.feature_dim()) {
    throw DimensionError("forward_logits expects [b x " +
                         std::to_string(model.feature_dim()) + "], got " +
                         shape_string(feats.shape()));
  }
  const Tensor in = grl_lambda ? g.grad_reverse(feats, *grl_lambda) : feats;
  return g.sigmoid(linear(g, model.head, in));
}

// Entry is 1 iff prob > tau (strict).
inline LabelMatrix predict(const Tensor& probs, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("threshold tau must lie in (0,1), got " + std::to_string(tau));
  }
  if (probs.rank() != 2) throw DimensionError("predict expects a b x N matrix");
  LabelMatrix out(probs.dim(0), probs.dim(1));
  const auto v = probs.values();
  for (std::size_t i = 0; i < v.size(); ++i) out.data[i] = v[i] > tau ? 1 : 0;
  return out;
}

struct AslConfig {
  double gamma_pos = 0.0;
  double gamma_neg = 4.0;
  double clip = 0.05;

  void validate() const {
    if (!(gamma_pos >= 0.0) || !(gamma_neg >= 0.0)) {
      throw ConfigError("ASL focusing parameters must be >= 0");
    }
    if (!(clip >= 0.0 && clip < 1.0)) throw ConfigError("ASL clip must lie in [0,1)");
  }

  static AslConfig bce() { return {0.0, 0.0, 0.0}; }
};

inline void validate_labels(const LabelMatrix& labels) {
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    if (labels.data[i] > 1) {
      throw DomainError("label entry " + std::to_string(i) + " is " +
                        std::to_string(labels.data[i]) + ", expected 0 or 1");
    }
  }
}

// Asymmetric loss, mean over all b x N entries:
//   y=1: -(1-p)^gp * log(p)
//   y=0: -pm^gn * log(1-pm),  pm = max(p - clip, 0)
// with p clamped to [1e-12, 1-1e-12] (zero gradient outside).
inline Tensor asl_loss(Graph& g, const Tensor& probs, const LabelMatrix& labels,
                       const AslConfig& cfg) {
  cfg.validate();
  if (probs.rank() != 2 || probs.dim(0) != labels.rows || probs.dim(1) != labels.cols) {
    throw DimensionError("asl_loss: probs " + shape_string(probs.shape()) +
                         " vs labels [" + std::to_string(labels.rows) + "x" +
                         std::to_string(labels.cols) + "]");
  }
  validate_labels(labels);
  constexpr double eps = 1e-12;
  const auto p = probs.values();
  const std::size_t n = p.size();
  std::vector<double> dldp(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool clamped = p[i] < eps || p[i] > 1.0 - eps;
    const double pc = std::clamp(p[i], eps, 1.0 - eps);
    if (labels.data[i]) {
      const double q = 1.0 - pc;
      const double w = std::pow(q, cfg.gamma_pos);
      total += -w * std::log(pc);
      double d = -w / pc;
      if (cfg.gamma_pos != 0.0) d += cfg.gamma_pos * std::pow(q, cfg.gamma_pos - 1.0) * std::log(pc);
      dldp[i] = clamped ? 0.0 : d;
    } else {
      const double pm = std::max(pc - cfg.clip, 0.0);
      const double w = std::pow(pm, cfg.gamma_neg);
      total += -w * std::log(1.0 - pm);
      double d = 0.0;
      if (pm > 0.0) {
        d = w / (1.0 - pm);
        if (cfg.gamma_neg != 0.0) {
          d += -cfg.gamma_neg * std::pow(pm, cfg.gamma_neg - 1.0) * std::log(1.0 - pm);
        }
      }
      dldp[i] = clamped ? 0.0 : d;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return g.record("asl_loss", {probs}, Shape{}, {total * inv_n},
                  [dldp = std::move(dldp), inv_n](std::span<const double> up,
                                                  std::vector<std::span<double>>& in) {
                    for (std::size_t i = 0; i < dldp.size(); ++i) in[0][i] += up[0] * inv_n * dldp[i];
                  });
}

// Cosine decay from lr_max at step 0 to 0 at total_steps (held at 0 after).
inline double cosine_lr(double lr_max, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return lr_max;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

struct AdamConfig {
  double lr_max = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t total_steps = 0;  // 0 disables the cosine schedule
};

// Adam with bias correction. The learning rate for the update that takes the
// step counter from t to t+1 is cosine_lr(lr_max, t, total_steps).
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr_max >= 0.0)) throw ConfigError("lr_max must be >= 0");
    for (const Tensor& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  const AdamConfig& config() const { return cfg_; }
  std::size_t steps() const { return step_; }
  double learning_rate() const { return cosine_lr(cfg_.lr_max, step_, cfg_.total_steps); }

  // Applies one update from the parameters' current grads. A parameter
  // without a grad is treated as having zero gradient. Throws NumericError,
  // leaving every parameter untouched, if any grad is non-finite.
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& g = params_[i].grad();
      if (g && !all_finite(*g)) {
        throw NumericError("adam: non-finite gradient for parameter #" + std::to_string(i) +
                           " " + shape_string(params_[i].shape()) + " at step " +
                           std::to_string(step_));
      }
    }
    const double lr = learning_rate();
    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& g = params_[i].grad();
      auto theta = params_[i].mutable_values();
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double gk = g ? (*g)[k] : 0.0;
        m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * gk;
        v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * gk * gk;
        const double mhat = m_[i][k] / bc1;
        const double vhat = v_[i][k] / bc2;
        theta[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
      if (!all_finite(theta)) {
        throw NumericError("adam: parameter #" + std::to_string(i) + " became non-finite");
      }
    }
  }

  void zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
  }

  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

  void restore(std::size_t step, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v) {
    if (m.size() != params_.size() || v.size() != params_.size()) {
      throw DimensionError("adam state does not match parameter count");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (m[i].size() != params_[i].size() || v[i].size() != params_[i].size()) {
        throw DimensionError("adam moment #" + std::to_string(i) + " has wrong length");
      }
    }
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

// Standalone domain discriminator (features -> hidden -> 1, relu + sigmoid)
// used only by the discriminator baseline.
struct Discriminator {
  Linear hidden;
  Linear out;

  static Discriminator create(std::size_t feature_dim, std::size_t width, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "discriminator-init");
    Discriminator d;
    d.hidden = Linear::init(feature_dim, width, rng);
    d.out = Linear::init(width, 1, rng);
    return d;
  }

  std::vector<Tensor> parameters() const {
    return {hidden.weight, hidden.bias, out.weight, out.bias};
  }

  Tensor forward(Graph& g, const Tensor& feats) const {
    return g.sigmoid(linear(g, out, g.relu(linear(g, hidden, feats))));
  }
};

}  // namespace gmmda

#endif  // GMMDA_NN_HPP_
