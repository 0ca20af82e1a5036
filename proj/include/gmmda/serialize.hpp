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

// JSON / CSV encodings: run configuration (unknown keys rejected), model
// checkpoints, GMM fits, metric reports, epoch logs, dataset manifests and
// the ablation table. Doubles are written in shortest round-trip form.

#ifndef GMMDA_SERIALIZE_HPP_
#define GMMDA_SERIALIZE_HPP_

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmda/data.hpp"
#include "gmmda/gmm.hpp"
#include "gmmda/metrics.hpp"
#include "gmmda/nn.hpp"
#include "gmmda/trainer.hpp"

namespace gmmda {

using json = nlohmann::ordered_json;

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

// nlohmann happily converts -1 to a huge size_t; refuse that.
inline void read_count(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

inline void read_seed(const json& j, std::uint64_t& out, const std::string& where) {
  if (!j.contains("seed")) return;
  const json& v = j.at("seed");
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError(where + ".seed: expected a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

}  // namespace detail

// ---------------------------------------------------------------- config

struct RunConfig {
  ShiftConfig data;
  TrainConfig train;
  std::optional<std::string> data_path;
  std::optional<std::string> out_path;
  std::optional<std::string> checkpoint_path;

  void validate() const {
    data.validate();
    train.validate();
  }
};

inline json to_json(const ShiftConfig& c) {
  return {{"seed", c.seed},
          {"n_per_domain", c.n_per_domain},
          {"feature_dim", c.feature_dim},
          {"num_classes", c.num_classes},
          {"label_rate", c.label_rate},
          {"noise_std", c.noise_std},
          {"shift_strength", c.shift_strength},
          {"target_noise_multiplier", c.target_noise_multiplier}};
}

inline ShiftConfig shift_config_from_json(const json& j) {
  const std::string w = "data";
  detail::reject_unknown(j, {"seed", "n_per_domain", "feature_dim", "num_classes", "label_rate",
                             "noise_std", "shift_strength", "target_noise_multiplier"},
                         w);
  ShiftConfig c;
  detail::read_seed(j, c.seed, w);
  detail::read_count(j, "n_per_domain", c.n_per_domain, w);
  detail::read_count(j, "feature_dim", c.feature_dim, w);
  detail::read_count(j, "num_classes", c.num_classes, w);
  detail::read_opt(j, "label_rate", c.label_rate, w);
  detail::read_opt(j, "noise_std", c.noise_std, w);
  detail::read_opt(j, "shift_strength", c.shift_strength, w);
  detail::read_opt(j, "target_noise_multiplier", c.target_noise_multiplier, w);
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"variant", variant_name(c.variant)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr_max", c.lr_max},
          {"alpha", c.alpha.alpha},
          {"squared", c.alpha.squared},
          {"asl", {{"gamma_pos", c.asl.gamma_pos}, {"gamma_neg", c.asl.gamma_neg}, {"clip", c.asl.clip}}},
          {"tau", c.tau},
          {"lambda_max", c.lambda_max},
          {"lambda_gamma", c.lambda_gamma},
          {"em", {{"max_iters", c.em.max_iters}, {"tol", c.em.tol}, {"variance_floor", c.em.variance_floor}}},
          {"seed", c.seed},
          {"swap_players", c.swap_players},
          {"discriminator_width", c.discriminator_width},
          {"stop_on_convergence", c.stop_on_convergence},
          {"convergence_tol", c.convergence_tol},
          {"convergence_patience", c.convergence_patience}};
}

inline TrainConfig train_config_from_json(const json& j) {
  const std::string w = "train";
  detail::reject_unknown(j, {"variant", "epochs", "batch_size", "lr_max", "alpha", "squared", "asl",
                             "tau", "lambda_max", "lambda_gamma", "em", "seed", "swap_players",
                             "discriminator_width", "stop_on_convergence", "convergence_tol",
                             "convergence_patience"},
                         w);
  TrainConfig c;
  if (j.contains("variant")) {
    if (!j["variant"].is_string()) throw ConfigError("train.variant: expected a string");
    c.variant = parse_variant(j["variant"].get<std::string>());
  }
  detail::read_count(j, "epochs", c.epochs, w);
  detail::read_count(j, "batch_size", c.batch_size, w);
  detail::read_opt(j, "lr_max", c.lr_max, w);
  detail::read_opt(j, "alpha", c.alpha.alpha, w);
  detail::read_opt(j, "squared", c.alpha.squared, w);
  if (j.contains("asl")) {
    const json& a = j["asl"];
    detail::reject_unknown(a, {"gamma_pos", "gamma_neg", "clip"}, "train.asl");
    detail::read_opt(a, "gamma_pos", c.asl.gamma_pos, "train.asl");
    detail::read_opt(a, "gamma_neg", c.asl.gamma_neg, "train.asl");
    detail::read_opt(a, "clip", c.asl.clip, "train.asl");
  }
  detail::read_opt(j, "tau", c.tau, w);
  detail::read_opt(j, "lambda_max", c.lambda_max, w);
  detail::read_opt(j, "lambda_gamma", c.lambda_gamma, w);
  if (j.contains("em")) {
    const json& e = j["em"];
    detail::reject_unknown(e, {"max_iters", "tol", "variance_floor"}, "train.em");
    detail::read_count(e, "max_iters", c.em.max_iters, "train.em");
    detail::read_opt(e, "tol", c.em.tol, "train.em");
    detail::read_opt(e, "variance_floor", c.em.variance_floor, "train.em");
  }
  detail::read_seed(j, c.seed, w);
  detail::read_opt(j, "swap_players", c.swap_players, w);
  detail::read_count(j, "discriminator_width", c.discriminator_width, w);
  detail::read_opt(j, "stop_on_convergence", c.stop_on_convergence, w);
  detail::read_opt(j, "convergence_tol", c.convergence_tol, w);
  detail::read_count(j, "convergence_patience", c.convergence_patience, w);
  return c;
}

inline json to_json(const RunConfig& c) {
  json j{{"data", to_json(c.data)},
         {"model", {{"hidden", c.train.hidden}}},
         {"train", to_json(c.train)}};
  json paths = json::object();
  if (c.data_path) paths["data"] = *c.data_path;
  if (c.out_path) paths["out"] = *c.out_path;
  if (c.checkpoint_path) paths["checkpoint"] = *c.checkpoint_path;
  if (!paths.empty()) j["paths"] = paths;
  return j;
}

// Missing sections and keys take their defaults; unknown keys anywhere are
// a ConfigError. The result is validated.
inline RunConfig run_config_from_json(const json& j) {
  detail::reject_unknown(j, {"data", "model", "train", "paths"}, "config");
  RunConfig c;
  if (j.contains("data")) c.data = shift_config_from_json(j["data"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("model")) {
    detail::reject_unknown(j["model"], {"hidden"}, "model");
    detail::read_opt(j["model"], "hidden", c.train.hidden, "model");
  }
  if (j.contains("paths")) {
    const json& p = j["paths"];
    detail::reject_unknown(p, {"data", "out", "checkpoint"}, "paths");
    std::string s;
    if (p.contains("data")) { detail::read_opt(p, "data", s, "paths"); c.data_path = s; }
    if (p.contains("out")) { detail::read_opt(p, "out", s, "paths"); c.out_path = s; }
    if (p.contains("checkpoint")) { detail::read_opt(p, "checkpoint", s, "paths"); c.checkpoint_path = s; }
  }
  c.validate();
  return c;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// ------------------------------------------------------------ gmm / metrics

inline json to_json(const GmmSummary& s) {
  json comps = json::array();
  for (const GaussianComponent& c : s.components) {
    comps.push_back({{"w", c.weight}, {"mu", c.mean}, {"sigma2", c.variance}});
  }
  return {{"components", comps},
          {"loglik", s.log_likelihood},
          {"iters", s.iterations},
          {"converged", s.converged},
          {"degenerate", s.degenerate}};
}

inline json to_json(const GmmFit& f) { return to_json(GmmSummary::of(f)); }

inline json to_json(const MetricsReport& r) {
  json aps = json::array();
  for (const auto& ap : r.per_class_ap) aps.push_back(ap ? json(*ap) : json(nullptr));
  return {{"map", r.map}, {"cp", r.cp},   {"cr", r.cr},   {"cf1", r.cf1},
          {"op", r.op},   {"or", r.or_},  {"of1", r.of1}, {"tau", r.tau},
          {"per_class_ap", aps}, {"excluded_classes", r.excluded_classes}};
}

inline constexpr const char* kMetricsCsvHeader = "map,cp,cr,cf1,op,or,of1,tau";

inline std::string metrics_csv_row(const MetricsReport& r) {
  std::string s;
  for (double v : {r.map, r.cp, r.cr, r.cf1, r.op, r.or_, r.of1, r.tau}) {
    if (!s.empty()) s += ',';
    s += format_double(v);
  }
  return s;
}

inline json to_json(const EpochLog& e, bool include_wall_time = false) {
  json j{{"epoch", e.epoch},
         {"classifier_loss", e.classifier_loss},
         {"adversarial_loss", e.adversarial_loss},
         {"lambda", e.lambda},
         {"lr", e.lr},
         {"steps", e.steps},
         {"skipped_fits", e.skipped_fits},
         {"source_fit", to_json(e.source_fit)},
         {"target_fit", to_json(e.target_fit)},
         {"fit_discrepancy", e.fit_discrepancy}};
  if (e.target_metrics) j["target_metrics"] = to_json(*e.target_metrics);
  if (include_wall_time) j["wall_seconds"] = e.wall_seconds;
  return j;
}

// One compact JSON document per line. Wall time is left out by default so
// reruns produce identical bytes.
inline std::string epoch_logs_jsonl(const std::vector<EpochLog>& logs, bool include_wall_time = false) {
  std::string out;
  for (const EpochLog& e : logs) out += to_json(e, include_wall_time).dump() + "\n";
  return out;
}

// ------------------------------------------------------------------- data

inline json manifest_json(const Dataset& ds, const ShiftConfig* generated_by) {
  json j{{"name", ds.name},
         {"domain", domain_name(ds.domain)},
         {"n", ds.size()},
         {"D", ds.feature_dim()},
         {"N", ds.num_classes()}};
  j["source_config"] = generated_by ? to_json(*generated_by) : json(nullptr);
  return j;
}

// ------------------------------------------------------------ checkpoints

inline constexpr const char* kCheckpointFormat = "gmmda-checkpoint";

inline json checkpoint_json(const Model& model, const Adam* optimizer = nullptr) {
  model.validate();
  auto values = [](const Tensor& t) { return std::vector<double>(t.values().begin(), t.values().end()); };
  json hidden = json::array();
  for (const Linear& l : model.feature_layers) hidden.push_back(l.out_dim());
  json layers = json::array();
  for (std::size_t i = 0; i < model.feature_layers.size(); ++i) {
    const Linear& l = model.feature_layers[i];
    layers.push_back({{"name", "feature" + std::to_string(i)},
                      {"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"weight", values(l.weight)},
                      {"bias", values(l.bias)}});
  }
  layers.push_back({{"name", "head"},
                    {"in", model.head.in_dim()},
                    {"out", model.head.out_dim()},
                    {"weight", values(model.head.weight)},
                    {"bias", values(model.head.bias)}});
  json j{{"format", kCheckpointFormat},
         {"version", 1},
         {"dims", {{"input", model.input_dim()}, {"hidden", hidden}, {"classes", model.num_classes()}}},
         {"layers", layers}};
  if (optimizer) {
    j["optimizer"] = {{"step", optimizer->steps()},
                      {"lr_max", optimizer->config().lr_max},
                      {"total_steps", optimizer->config().total_steps},
                      {"first_moment", optimizer->first_moments()},
                      {"second_moment", optimizer->second_moments()}};
  }
  return j;
}

struct Checkpoint {
  Model model;
  std::optional<json> optimizer;
};

inline Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != kCheckpointFormat || j.value("version", 0) != 1) {
      throw ParseError("not a version-1 gmmda checkpoint");
    }
    Model m;
    const json& layers = j.at("layers");
    if (!layers.is_array() || layers.size() < 2) throw ParseError("checkpoint needs >= 2 layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const json& l = layers[i];
      const auto in = l.at("in").get<std::size_t>();
      const auto out = l.at("out").get<std::size_t>();
      Linear lin{Tensor::matrix(in, out, l.at("weight").get<std::vector<double>>(), true),
                 Tensor(Shape{out}, l.at("bias").get<std::vector<double>>(), true)};
      if (i + 1 < layers.size()) {
        m.feature_layers.push_back(std::move(lin));
      } else {
        m.head = std::move(lin);
      }
    }
    m.validate();
    const json& dims = j.at("dims");
    if (dims.at("input").get<std::size_t>() != m.input_dim() ||
        dims.at("classes").get<std::size_t>() != m.num_classes()) {
      throw ParseError("checkpoint dims disagree with its layers");
    }
    Checkpoint c{std::move(m), std::nullopt};
    if (j.contains("optimizer")) c.optimizer = j["optimizer"];
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

// Restores optimizer state saved by checkpoint_json into `adam`, which must
// have been built over the same parameter list.
inline void restore_optimizer(Adam& adam, const json& state) {
  try {
    adam.restore(state.at("step").get<std::size_t>(),
                 state.at("first_moment").get<std::vector<std::vector<double>>>(),
                 state.at("second_moment").get<std::vector<std::vector<double>>>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("optimizer state: ") + e.what());
  }
}

// --------------------------------------------------------------- ablation

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant,mean_map";
  if (!rows.empty()) {
    for (std::uint64_t s : rows.front().seeds) os << ",map_seed_" << s;
  }
  os << '\n';
  for (const AblationRow& r : rows) {
    os << variant_name(r.variant) << ',' << format_double(r.mean_map());
    for (const MetricsReport& m : r.reports) os << ',' << format_double(m.map);
    os << '\n';
  }
  return os.str();
}

}  // namespace gmmda

#endif  // GMMDA_SERIALIZE_HPP_
