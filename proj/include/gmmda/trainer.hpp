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

// Training loops: source-only baseline, GMM/Frechet adaptation through a
// gradient-reversal layer, and the ablation variants (empirical
// 1-Wasserstein critic, standalone domain discriminator).

#ifndef GMMDA_TRAINER_HPP_
#define GMMDA_TRAINER_HPP_

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gmmda/data.hpp"
#include "gmmda/discrepancy.hpp"
#include "gmmda/gmm.hpp"
#include "gmmda/metrics.hpp"
#include "gmmda/nn.hpp"

namespace gmmda {

enum class Variant { kSourceOnly, kDiscriminator, kDdaW1, kDdaFrechet };

// Ablation table column order.
inline constexpr std::array<Variant, 4> kAllVariants{
    Variant::kSourceOnly, Variant::kDiscriminator, Variant::kDdaW1, Variant::kDdaFrechet};

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kSourceOnly: return "source_only";
    case Variant::kDiscriminator: return "discriminator";
    case Variant::kDdaW1: return "dda_w1";
    case Variant::kDdaFrechet: return "dda_frechet";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + std::string(s) +
                    "' (expected source_only, discriminator, dda_w1 or dda_frechet)");
}

struct TrainConfig {
  Variant variant = Variant::kDdaFrechet;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double lr_max = 1e-3;
  AdvWeights alpha;
  AslConfig asl;
  double tau = 0.5;
  double lambda_max = 1.0;
  double lambda_gamma = 10.0;
  EmConfig em;
  std::uint64_t seed = 0;
  // false: the classifier head ascends the adversarial loss and the feature
  // extractor descends it through the GRL (total = L_c - L_adv).
  // true: total = L_c + L_adv.
  bool swap_players = false;
  std::vector<std::size_t> hidden{64, 32};
  std::size_t discriminator_width = 32;
  // Stop once the epoch classifier loss improved by less than
  // convergence_tol for convergence_patience consecutive epochs.
  bool stop_on_convergence = true;
  double convergence_tol = 1e-4;
  std::size_t convergence_patience = 5;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr_max >= 0.0)) throw ConfigError("lr_max must be >= 0");
    if (!(lambda_max >= 0.0)) throw ConfigError("lambda_max must be >= 0");
    if (!(lambda_gamma >= 0.0)) throw ConfigError("lambda_gamma must be >= 0");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
    if (hidden.empty()) throw ConfigError("hidden must list at least one layer width");
    if (discriminator_width == 0) throw ConfigError("discriminator_width must be positive");
    alpha.validate();
    asl.validate();
    em.validate();
  }
};

// GRL coefficient at training progress p in [0,1]:
// lambda_max * (2 / (1 + exp(-gamma p)) - 1).
inline double lambda_schedule(double progress, double lambda_max, double gamma) {
  return lambda_max * (2.0 / (1.0 + std::exp(-gamma * progress)) - 1.0);
}

struct GmmSummary {
  std::array<GaussianComponent, 2> components;
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool degenerate = false;

  static GmmSummary of(const GmmFit& f) {
    return {f.components, f.log_likelihood, f.iterations, f.converged, f.degenerate};
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double classifier_loss = 0.0;   // mean over steps
  double adversarial_loss = 0.0;  // mean over steps that computed it
  double lambda = 0.0;            // at the last step of the epoch
  double lr = 0.0;                // at the last step of the epoch
  std::size_t steps = 0;
  std::size_t skipped_fits = 0;   // adversarial steps degraded to classification-only
  GmmSummary source_fit;          // on the whole source training set, end of epoch
  GmmSummary target_fit;          // on the whole target training set, end of epoch
  double fit_discrepancy = 0.0;   // adversarial_loss(source_fit, target_fit)
  std::optional<MetricsReport> target_metrics;
  double wall_seconds = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> logs;
  bool converged_early = false;
};

// Probabilities of the model on every row, no graph recording.
inline Tensor predict_probs(const Model& model, const FeatureMatrix& x) {
  const Model frozen = model.detached();
  Graph g;
  return forward_logits(g, frozen, forward_features(g, frozen, to_tensor(x)));
}

inline MetricsReport evaluate(const Model& model, const Dataset& ds, double tau = 0.5) {
  return full_report(predict_probs(model, ds.features), ds.labels, tau);
}

inline GmmFit fit_predictions(const Model& model, const FeatureMatrix& x, const EmConfig& em) {
  return em_fit(pool_logits(predict_probs(model, x)), em);
}

namespace detail {

inline bool fit_usable(const GmmFit& fit) {
  for (std::size_t c = 0; c < 2; ++c) {
    double total = 0.0;
    for (std::size_t k = 0; k < fit.responsibilities.rows; ++k) total += fit.responsibilities(k, c);
    if (total < 1e-8) return false;
  }
  return true;
}

}  // namespace detail

struct StepLoss {
  Tensor total;
  Tensor classifier;
  std::optional<Tensor> adversarial;  // empty for source_only or a skipped fit
};

// Loss of one step on graph `g`. `xt` is required for every variant except
// source_only; `disc` only for the discriminator variant.
inline StepLoss step_loss(Graph& g, const Model& model, const Discriminator* disc,
                          const FeatureMatrix& xs, const LabelMatrix& ys, const FeatureMatrix* xt,
                          double lambda, const TrainConfig& cfg) {
  const Tensor fs = forward_features(g, model, to_tensor(xs));
  const Tensor lc = asl_loss(g, forward_logits(g, model, fs), ys, cfg.asl);
  StepLoss out{lc, lc, std::nullopt};
  if (cfg.variant == Variant::kSourceOnly) return out;
  if (xt == nullptr) throw ConfigError("step_loss: adversarial variant needs target features");
  const Tensor ft = forward_features(g, model, to_tensor(*xt));
  if (cfg.variant == Variant::kDiscriminator) {
    if (disc == nullptr) throw ConfigError("step_loss: discriminator variant needs a discriminator");
    const Tensor ds = disc->forward(g, g.grad_reverse(fs, lambda));
    const Tensor dt = disc->forward(g, g.grad_reverse(ft, lambda));
    out.adversarial = discriminator_loss(g, ds, dt);
    out.total = g.add(lc, *out.adversarial);
    return out;
  }
  const Tensor ps = forward_logits(g, model, fs, lambda);
  const Tensor pt = forward_logits(g, model, ft, lambda);
  if (cfg.variant == Variant::kDdaW1) {
    out.adversarial = wasserstein1_empirical(g, pt, ps);
  } else {
    try {
      const GmmFit fit_s = em_fit(pool_logits(ps), cfg.em);
      const GmmFit fit_t = em_fit(pool_logits(pt), cfg.em);
      if (detail::fit_usable(fit_s) && detail::fit_usable(fit_t)) {
        const auto ms = differentiable_moments(g, ps, fit_s.responsibilities, cfg.em.variance_floor);
        const auto mt = differentiable_moments(g, pt, fit_t.responsibilities, cfg.em.variance_floor);
        out.adversarial = adversarial_loss(g, ms, mt, cfg.alpha);
      }
    } catch (const FitSkipped&) {
    }
  }
  if (out.adversarial) {
    out.total = cfg.swap_players ? g.add(lc, *out.adversarial) : g.sub(lc, *out.adversarial);
  }
  return out;
}

// Trains a copy of `init`. The target domain enters only as unlabeled
// features; `eval_target`, when given, is scored at the end of every epoch
// for the log and never touches the parameters.
inline TrainResult train(const Model& init, const Dataset& source, const UnlabeledDataset& target,
                         const TrainConfig& cfg, const Dataset* eval_target = nullptr) {
  cfg.validate();
  init.validate();
  if (source.feature_dim() != init.input_dim() || target.features.cols != init.input_dim()) {
    throw DimensionError("train: data feature dim does not match model input dim " +
                         std::to_string(init.input_dim()));
  }
  if (source.num_classes() != init.num_classes()) {
    throw DimensionError("train: source has " + std::to_string(source.num_classes()) +
                         " classes, model has " + std::to_string(init.num_classes()));
  }
  if (source.size() == 0 || target.size() == 0) throw ConfigError("train: empty dataset");

  TrainResult result{init.clone(), {}, false};
  Model& model = result.model;
  const bool adversarial = cfg.variant != Variant::kSourceOnly;
  std::optional<Discriminator> disc;
  std::vector<Tensor> params = model.parameters();
  if (cfg.variant == Variant::kDiscriminator) {
    disc = Discriminator::create(model.feature_dim(), cfg.discriminator_width, cfg.seed);
    for (const Tensor& p : disc->parameters()) params.push_back(p);
  }
  const std::size_t steps_per_epoch = (source.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  Adam adam(params, AdamConfig{cfg.lr_max, 0.9, 0.999, 1e-8, total_steps});
  CyclicSampler target_sampler(target, Rng::splitmix64(cfg.seed) ^ 0x7461726765747331ull);

  std::size_t step = 0, stalled = 0;
  std::optional<double> prev_loss;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch + 1;
    double lc_sum = 0.0, adv_sum = 0.0;
    std::size_t adv_count = 0;
    for (const Batch& batch : batches(source, cfg.batch_size, cfg.seed, epoch, false)) {
      const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
      const double lambda = lambda_schedule(progress, cfg.lambda_max, cfg.lambda_gamma);
      log.lambda = lambda;
      log.lr = adam.learning_rate();
      try {
        Graph g;
        std::optional<FeatureMatrix> xt;
        if (adversarial) xt = target_sampler.next(batch.features.rows);
        const StepLoss sl = step_loss(g, model, disc ? &*disc : nullptr, batch.features,
                                      *batch.labels, xt ? &*xt : nullptr, lambda, cfg);
        const Tensor& total = sl.total;
        lc_sum += sl.classifier.item();
        if (adversarial) {
          if (sl.adversarial) {
            adv_sum += sl.adversarial->item();
            ++adv_count;
          } else {
            ++log.skipped_fits;
          }
        }
        if (!std::isfinite(total.item())) throw NumericError("non-finite loss");
        g.backward(total);
        adam.step();
        adam.zero_grad();
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + " step " +
                           std::to_string(step) + ": " + e.what());
      }
      ++step;
      ++log.steps;
    }
    log.classifier_loss = lc_sum / static_cast<double>(log.steps);
    log.adversarial_loss = adv_count ? adv_sum / static_cast<double>(adv_count) : 0.0;
    const GmmFit sf = fit_predictions(model, source.features, cfg.em);
    const GmmFit tf = fit_predictions(model, target.features, cfg.em);
    log.source_fit = GmmSummary::of(sf);
    log.target_fit = GmmSummary::of(tf);
    log.fit_discrepancy = adversarial_loss(sf, tf, cfg.alpha);
    if (eval_target) log.target_metrics = evaluate(model, *eval_target, cfg.tau);
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.logs.push_back(log);

    if (cfg.stop_on_convergence) {
      if (prev_loss && *prev_loss - log.classifier_loss < cfg.convergence_tol) {
        ++stalled;
      } else {
        stalled = 0;
      }
      prev_loss = log.classifier_loss;
      if (stalled >= cfg.convergence_patience) {
        result.converged_early = true;
        break;
      }
    }
  }
  return result;
}

struct AblationRow {
  Variant variant;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> reports;  // target test split, one per seed

  double mean_map() const {
    double s = 0.0;
    for (const MetricsReport& r : reports) s += r.map;
    return reports.empty() ? 0.0 : s / static_cast<double>(reports.size());
  }
};

// Every variant on every seed. A seed drives both data generation and model
// initialisation, so the four variants of one seed start from identical
// weights on identical data. Rows follow kAllVariants order.
inline std::vector<AblationRow> run_ablation(const ShiftConfig& data, const TrainConfig& base,
                                             const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("run_ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (Variant v : kAllVariants) rows.push_back({v, seeds, {}});
  for (std::uint64_t seed : seeds) {
    ShiftConfig dc = data;
    dc.seed = seed;
    const DomainPair pair = generate_pair(dc);
    const Model init = Model::create(pair.source_train.feature_dim(), base.hidden,
                                     pair.source_train.num_classes(), seed);
    for (AblationRow& row : rows) {
      TrainConfig tc = base;
      tc.variant = row.variant;
      tc.seed = seed;
      const TrainResult res = train(init, pair.source_train, pair.target_train.unlabeled(), tc);
      row.reports.push_back(evaluate(res.model, pair.target_test, tc.tau));
    }
  }
  return rows;
}

}  // namespace gmmda

#endif  // GMMDA_TRAINER_HPP_
