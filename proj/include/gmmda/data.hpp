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

// Seeded synthetic two-domain multi-label data, CSV interchange and
// mini-batching.

#ifndef GMMDA_DATA_HPP_
#define GMMDA_DATA_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmmda/matrix.hpp"
#include "gmmda/rng.hpp"

namespace gmmda {

enum class Domain { kSource, kTarget };

inline std::string_view domain_name(Domain d) {
  return d == Domain::kSource ? "source" : "target";
}

// Target-domain features with the labels structurally absent.
struct UnlabeledDataset {
  std::string name;
  Domain domain = Domain::kTarget;
  FeatureMatrix features;

  std::size_t size() const { return features.rows; }
};

struct Dataset {
  std::string name;
  Domain domain = Domain::kSource;
  FeatureMatrix features;  // n x D
  LabelMatrix labels;      // n x N, entries 0/1

  std::size_t size() const { return features.rows; }
  std::size_t feature_dim() const { return features.cols; }
  std::size_t num_classes() const { return labels.cols; }

  UnlabeledDataset unlabeled() const { return {name, domain, features}; }

  // Row counts agree, labels binary with a positive in every row, features
  // finite.
  void validate() const {
    if (features.rows != labels.rows) {
      throw DimensionError("dataset '" + name + "': " + std::to_string(features.rows) +
                           " feature rows vs " + std::to_string(labels.rows) + " label rows");
    }
    for (double x : features.data) {
      if (!std::isfinite(x)) throw NumericError("dataset '" + name + "': non-finite feature");
    }
    for (std::size_t i = 0; i < labels.rows; ++i) {
      bool any = false;
      for (std::uint8_t y : labels.row(i)) {
        if (y > 1) throw DomainError("dataset '" + name + "': non-binary label");
        any = any || y;
      }
      if (!any) {
        throw DomainError("dataset '" + name + "': row " + std::to_string(i) +
                          " has no positive label");
      }
    }
  }
};

struct ShiftConfig {
  std::uint64_t seed = 0;
  std::size_t n_per_domain = 2000;
  std::size_t feature_dim = 20;
  std::size_t num_classes = 5;
  double label_rate = 0.3;
  double noise_std = 0.1;
  double shift_strength = 0.5;
  double target_noise_multiplier = 1.5;

  void validate() const {
    if (n_per_domain < 2) throw ConfigError("n_per_domain must be >= 2");
    if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
    if (num_classes == 0) throw ConfigError("num_classes must be positive");
    if (!(label_rate > 0.0 && label_rate < 1.0)) throw ConfigError("label_rate must lie in (0,1)");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (!(shift_strength >= 0.0 && shift_strength <= 1.0)) {
      throw ConfigError("shift_strength must lie in [0,1]");
    }
    if (!(target_noise_multiplier >= 0.0)) throw ConfigError("target_noise_multiplier must be >= 0");
  }
};

struct DomainPair {
  Dataset source_train;
  Dataset source_test;
  Dataset target_train;
  Dataset target_test;
};

namespace detail {

// RNG streams: "prototypes", "shift", and per domain "labels/<d>",
// "noise/<d>", "split/<d>".
inline std::pair<Dataset, Dataset> generate_domain(const ShiftConfig& cfg, Domain domain,
                                                   const FeatureMatrix& prototypes) {
  const std::string dn(domain_name(domain));
  const std::size_t n = cfg.n_per_domain, dim = cfg.feature_dim, classes = cfg.num_classes;
  Rng label_rng = Rng::stream(cfg.seed, "labels/" + dn);
  Rng noise_rng = Rng::stream(cfg.seed, "noise/" + dn);
  const double noise =
      domain == Domain::kTarget ? cfg.noise_std * cfg.target_noise_multiplier : cfg.noise_std;

  FeatureMatrix shift_r(dim, dim);
  std::vector<double> shift_b(dim);
  {
    Rng shift_rng = Rng::stream(cfg.seed, "shift");
    for (double& x : shift_r.data) x = shift_rng.normal(0.0, 0.3);
    for (double& x : shift_b) x = shift_rng.normal();
  }

  FeatureMatrix x(n, dim);
  LabelMatrix y(n, classes);
  std::vector<double> raw(dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto yi = y.row(i);
    std::size_t positives = 0;
    while (positives == 0) {
      for (std::size_t c = 0; c < classes; ++c) {
        yi[c] = label_rng.bernoulli(cfg.label_rate) ? 1 : 0;
        positives += yi[c];
      }
    }
    std::fill(raw.begin(), raw.end(), 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      if (!yi[c]) continue;
      const auto proto = prototypes.row(c);
      for (std::size_t k = 0; k < dim; ++k) raw[k] += proto[k];
    }
    for (std::size_t k = 0; k < dim; ++k) {
      raw[k] = raw[k] / static_cast<double>(positives) + noise_rng.normal(0.0, noise);
    }
    auto xi = x.row(i);
    if (domain == Domain::kTarget) {
      // (I + delta R) x + delta b
      const double delta = cfg.shift_strength;
      for (std::size_t r = 0; r < dim; ++r) {
        double acc = raw[r];
        for (std::size_t k = 0; k < dim; ++k) acc += delta * shift_r(r, k) * raw[k];
        xi[r] = acc + delta * shift_b[r];
      }
    } else {
      std::copy(raw.begin(), raw.end(), xi.begin());
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = Rng::stream(cfg.seed, "split/" + dn);
  split_rng.shuffle(order);
  const std::size_t half = n / 2;
  const std::span<const std::size_t> all(order);
  Dataset train{dn + "/train", domain, x.gather(all.subspan(0, half)),
                y.gather(all.subspan(0, half))};
  Dataset test{dn + "/test", domain, x.gather(all.subspan(half)), y.gather(all.subspan(half))};
  return {std::move(train), std::move(test)};
}

}  // namespace detail

// Class prototypes v_c ~ N(0, I_D); labels Bernoulli(label_rate) per class,
// redrawn until a row has a positive; feature = mean of the positive
// prototypes + N(0, noise^2 I). Target rows are then mapped through
// x -> (I + delta R) x + delta b with R_ij ~ N(0, 0.3^2), b ~ N(0, I), and use
// noise_std * target_noise_multiplier. Each domain is split 50/50 into
// train/test. Pure function of cfg.
inline DomainPair generate_pair(const ShiftConfig& cfg) {
  cfg.validate();
  FeatureMatrix prototypes(cfg.num_classes, cfg.feature_dim);
  Rng proto_rng = Rng::stream(cfg.seed, "prototypes");
  for (double& v : prototypes.data) v = proto_rng.normal();
  auto [s_train, s_test] = detail::generate_domain(cfg, Domain::kSource, prototypes);
  auto [t_train, t_test] = detail::generate_domain(cfg, Domain::kTarget, prototypes);
  return {std::move(s_train), std::move(s_test), std::move(t_train), std::move(t_test)};
}

struct Batch {
  FeatureMatrix features;
  std::optional<LabelMatrix> labels;
};

// Seeded shuffle per (seed, epoch); the final short batch is kept.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, "batches/" + std::to_string(epoch));
  rng.shuffle(order);
  return order;
}

inline std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                                  std::size_t epoch, bool drop_labels) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  const auto order = epoch_order(ds.size(), seed, epoch);
  std::vector<Batch> out;
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    const auto idx = std::span<const std::size_t>(order).subspan(
        b, std::min(batch_size, order.size() - b));
    Batch batch{ds.features.gather(idx), std::nullopt};
    if (!drop_labels) batch.labels = ds.labels.gather(idx);
    out.push_back(std::move(batch));
  }
  return out;
}

inline std::vector<FeatureMatrix> batches(const UnlabeledDataset& ds, std::size_t batch_size,
                                          std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  const auto order = epoch_order(ds.size(), seed, epoch);
  std::vector<FeatureMatrix> out;
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    out.push_back(ds.features.gather(std::span<const std::size_t>(order).subspan(
        b, std::min(batch_size, order.size() - b))));
  }
  return out;
}

// Endless stream of unlabeled rows in reshuffled passes; next(k) returns
// exactly k rows.
class CyclicSampler {
 public:
  CyclicSampler(const UnlabeledDataset& ds, std::uint64_t seed)
      : ds_(&ds), seed_(seed), order_(epoch_order(ds.size(), seed, 0)) {
    if (ds.size() == 0) throw ConfigError("cannot sample from an empty dataset");
  }

  FeatureMatrix next(std::size_t k) {
    std::vector<std::size_t> idx;
    idx.reserve(k);
    while (idx.size() < k) {
      if (pos_ == order_.size()) {
        order_ = epoch_order(ds_->size(), seed_, ++pass_);
        pos_ = 0;
      }
      idx.push_back(order_[pos_++]);
    }
    return ds_->features.gather(idx);
  }

 private:
  const UnlabeledDataset* ds_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::size_t pass_ = 0;
};

// Shortest text that reads back to the same double, at most 17 significant
// digits.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return in;
}

template <typename T, typename ParseCell>
Matrix<T> read_csv(const std::filesystem::path& path, ParseCell parse) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::size_t cols = split_commas(line).size();
  std::vector<T> values;
  std::size_t rows = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != cols) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(cols) + " columns, got " + std::to_string(cells.size()));
    }
    for (std::string_view cell : cells) {
      const auto v = parse(cell);
      if (!v) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad value '" +
                         std::string(cell) + "'");
      }
      values.push_back(*v);
    }
    ++rows;
  }
  return Matrix<T>(rows, cols, std::move(values));
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

inline std::optional<std::uint8_t> parse_label(std::string_view s) {
  if (s == "0") return std::uint8_t{0};
  if (s == "1") return std::uint8_t{1};
  return std::nullopt;
}

template <typename T, typename Format>
void write_csv(const std::filesystem::path& path, const Matrix<T>& m, char prefix, Format fmt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (std::size_t c = 0; c < m.cols; ++c) out << (c ? "," : "") << prefix << c;
  out << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out << (c ? "," : "") << fmt(m(r, c));
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace detail

// Writes <dir>/features.csv (header f0..f{D-1}) and <dir>/labels.csv
// (header c0..c{N-1}).
inline void save_csv(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_csv(dir / "features.csv", ds.features, 'f', format_double);
  detail::write_csv(dir / "labels.csv", ds.labels, 'c', [](std::uint8_t v) { return int(v); });
}

inline FeatureMatrix load_features_csv(const std::filesystem::path& path) {
  return detail::read_csv<double>(path, detail::parse_double);
}

inline Dataset load_csv(const std::filesystem::path& features_path,
                        const std::filesystem::path& labels_path, std::string name = "dataset",
                        Domain domain = Domain::kSource) {
  Dataset ds{std::move(name), domain, load_features_csv(features_path),
             detail::read_csv<std::uint8_t>(labels_path, detail::parse_label)};
  if (ds.features.rows != ds.labels.rows) {
    throw ParseError("row count mismatch: " + features_path.string() + " has " +
                     std::to_string(ds.features.rows) + ", " + labels_path.string() + " has " +
                     std::to_string(ds.labels.rows));
  }
  for (std::size_t i = 0; i < ds.labels.rows; ++i) {
    const auto row = ds.labels.row(i);
    if (std::none_of(row.begin(), row.end(), [](std::uint8_t y) { return y != 0; })) {
      throw ParseError(labels_path.string() + ":" + std::to_string(i + 2) +
                       ": row has no positive label");
    }
  }
  return ds;
}

inline Dataset load_csv_dir(const std::filesystem::path& dir, std::string name = "dataset",
                            Domain domain = Domain::kSource) {
  return load_csv(dir / "features.csv", dir / "labels.csv", std::move(name), domain);
}

}  // namespace gmmda

#endif  // GMMDA_DATA_HPP_
