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

// Multi-label evaluation: ranked average precision per class and the
// per-class (macro) / overall (micro) precision, recall and F1 at a
// threshold.

#ifndef GMMDA_METRICS_HPP_
#define GMMDA_METRICS_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmmda/autodiff.hpp"
#include "gmmda/matrix.hpp"

namespace gmmda {

struct MetricsReport {
  double map = 0.0;
  double cp = 0.0;
  double cr = 0.0;
  double cf1 = 0.0;
  double op = 0.0;
  double or_ = 0.0;
  double of1 = 0.0;
  double tau = 0.5;
  // nullopt for classes without a positive label; those are left out of
  // every per-class average.
  std::vector<std::optional<double>> per_class_ap;
  std::size_t excluded_classes = 0;

  bool operator==(const MetricsReport&) const = default;
};

inline double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// Non-interpolated ranked AP: rank by score descending (ties keep input
// order) and average precision@k over the ranks k holding a positive.
// nullopt when there is no positive label.
inline std::optional<double> average_precision(std::span<const double> scores,
                                               std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("average_precision: " + std::to_string(scores.size()) +
                         " scores vs " + std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

inline MetricsReport full_report(const Matrix<double>& probs, const LabelMatrix& labels,
                                 double tau = 0.5) {
  if (probs.rows != labels.rows || probs.cols != labels.cols) {
    throw DimensionError("full_report: probs " + std::to_string(probs.rows) + "x" +
                         std::to_string(probs.cols) + " vs labels " +
                         std::to_string(labels.rows) + "x" + std::to_string(labels.cols));
  }
  if (probs.rows == 0 || probs.cols == 0) throw DimensionError("full_report: empty batch");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");

  MetricsReport rep;
  rep.tau = tau;
  const std::size_t n = probs.rows, classes = probs.cols;
  std::size_t tp_all = 0, fp_all = 0, fn_all = 0, counted = 0;
  double ap_sum = 0.0, p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  std::vector<double> scores(n);
  std::vector<std::uint8_t> truth(n);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probs(i, c);
      truth[i] = labels(i, c);
      const bool pred = scores[i] > tau;
      if (pred && truth[i]) ++tp;
      else if (pred) ++fp;
      else if (truth[i]) ++fn;
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    const auto ap = average_precision(scores, truth);
    rep.per_class_ap.push_back(ap);
    if (!ap) {
      ++rep.excluded_classes;
      continue;
    }
    ++counted;
    ap_sum += *ap;
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    p_sum += p;
    r_sum += r;
    f_sum += f1_score(p, r);
  }
  if (counted > 0) {
    const double k = static_cast<double>(counted);
    rep.map = ap_sum / k;
    rep.cp = p_sum / k;
    rep.cr = r_sum / k;
    rep.cf1 = f_sum / k;
  }
  rep.op = tp_all + fp_all ? static_cast<double>(tp_all) / static_cast<double>(tp_all + fp_all) : 0.0;
  rep.or_ = tp_all + fn_all ? static_cast<double>(tp_all) / static_cast<double>(tp_all + fn_all) : 0.0;
  rep.of1 = f1_score(rep.op, rep.or_);
  return rep;
}

inline MetricsReport full_report(const Tensor& probs, const LabelMatrix& labels,
                                 double tau = 0.5) {
  if (probs.rank() != 2) throw DimensionError("full_report expects a b x N tensor");
  return full_report(Matrix<double>(probs.dim(0), probs.dim(1),
                                    std::vector<double>(probs.values().begin(),
                                                        probs.values().end())),
                     labels, tau);
}

}  // namespace gmmda

#endif  // GMMDA_METRICS_HPP_
