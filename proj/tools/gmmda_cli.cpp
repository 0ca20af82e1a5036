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

// gmmda: generate synthetic domain pairs, train/evaluate adaptation
// variants, export prediction histograms and run the ablation table.
//
// Exit codes: 0 success, 2 usage/config/input error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gmmda/gmmda.hpp"

namespace fs = std::filesystem;
using namespace gmmda;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> shift_strength;
  std::optional<std::size_t> n_per_domain;
  std::optional<std::string> variant;
  std::optional<std::size_t> epochs;
  std::optional<double> lambda_max;
};

RunConfig load_config(const std::string& path, const Overrides& o) {
  RunConfig cfg = path.empty() ? RunConfig{} : run_config_from_json(read_json_file(path));
  if (o.seed) {
    cfg.data.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (o.shift_strength) cfg.data.shift_strength = *o.shift_strength;
  if (o.n_per_domain) cfg.data.n_per_domain = *o.n_per_domain;
  if (o.variant) cfg.train.variant = parse_variant(*o.variant);
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.lambda_max) cfg.train.lambda_max = *o.lambda_max;
  cfg.validate();
  return cfg;
}

std::string require_path(const std::string& flag, const std::optional<std::string>& from_config,
                         const char* name) {
  if (!flag.empty()) return flag;
  if (from_config) return *from_config;
  throw ConfigError(std::string("missing required path --") + name);
}

void cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  const DomainPair pair = generate_pair(cfg.data);
  for (const Dataset* ds : {&pair.source_train, &pair.source_test, &pair.target_train,
                            &pair.target_test}) {
    save_csv(*ds, out / ds->name);
  }
  write_json_file(out / "source" / "manifest.json", manifest_json(pair.source_train, &cfg.data));
  write_json_file(out / "target" / "manifest.json", manifest_json(pair.target_train, &cfg.data));
}

void cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out, bool wall_time) {
  const Dataset source = load_csv_dir(data / "source" / "train", "source/train", Domain::kSource);
  const UnlabeledDataset target{"target/train", Domain::kTarget,
                                load_features_csv(data / "target" / "train" / "features.csv")};
  const Dataset target_test =
      load_csv_dir(data / "target" / "test", "target/test", Domain::kTarget);
  const Model init = Model::create(source.feature_dim(), cfg.train.hidden, source.num_classes(),
                                   cfg.train.seed);
  const TrainResult res = train(init, source, target, cfg.train, &target_test);
  const MetricsReport report = evaluate(res.model, target_test, cfg.train.tau);
  write_json_file(out / "checkpoint.json", checkpoint_json(res.model));
  write_text_file(out / "epochs.jsonl", epoch_logs_jsonl(res.logs, wall_time));
  write_json_file(out / "report.json", to_json(report));
  write_json_file(out / "config.json", to_json(cfg));
  std::cout << to_json(report).dump(2) << "\n";
}

Model load_model(const fs::path& path) { return checkpoint_from_json(read_json_file(path)).model; }

FeatureMatrix checked_features(const Model& model, const fs::path& dir) {
  FeatureMatrix x = load_features_csv(dir / "features.csv");
  if (x.cols != model.input_dim()) {
    throw DimensionError("data has " + std::to_string(x.cols) + " features, checkpoint expects " +
                         std::to_string(model.input_dim()));
  }
  return x;
}

void cmd_eval(const fs::path& checkpoint, const fs::path& data, double tau,
              const std::string& out_csv) {
  const Model model = load_model(checkpoint);
  const Dataset ds = load_csv_dir(data, data.string());
  if (ds.feature_dim() != model.input_dim() || ds.num_classes() != model.num_classes()) {
    throw DimensionError("data is " + std::to_string(ds.feature_dim()) + "->" +
                         std::to_string(ds.num_classes()) + ", checkpoint is " +
                         std::to_string(model.input_dim()) + "->" +
                         std::to_string(model.num_classes()));
  }
  const MetricsReport report = evaluate(model, ds, tau);
  std::cout << to_json(report).dump(2) << "\n";
  if (!out_csv.empty()) {
    write_text_file(out_csv, std::string(kMetricsCsvHeader) + "\n" + metrics_csv_row(report) + "\n");
  }
}

void cmd_hist(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data,
              std::size_t bins, const fs::path& out_csv, std::string gmm_out) {
  if (bins < 2) throw ConfigError("--bins must be >= 2");
  const Model model = load_model(checkpoint);
  const Tensor probs = predict_probs(model, checked_features(model, data));
  const std::vector<double> pooled = pool_logits(probs);
  std::vector<std::size_t> counts(bins, 0);
  for (double p : pooled) {
    const auto b = static_cast<std::size_t>(p * static_cast<double>(bins));
    ++counts[std::min(b, bins - 1)];
  }
  std::ostringstream csv;
  csv << "bin_left,bin_right,count\n";
  for (std::size_t i = 0; i < bins; ++i) {
    csv << format_double(static_cast<double>(i) / static_cast<double>(bins)) << ','
        << format_double(static_cast<double>(i + 1) / static_cast<double>(bins)) << ','
        << counts[i] << '\n';
  }
  write_text_file(out_csv, csv.str());
  const json fit = to_json(em_fit(pooled, cfg.train.em));
  if (gmm_out.empty()) gmm_out = fs::path(out_csv).replace_extension(".gmm.json").string();
  write_json_file(gmm_out, fit);
  std::cout << fit.dump(2) << "\n";
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      if (tok.empty() || tok[0] == '-') throw std::invalid_argument(tok);
      seeds.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + tok + "' in --seeds");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds needs at least one seed");
  return seeds;
}

std::string defaults_footer() {
  return "\nConfig file (JSON, unknown keys rejected; flags override). Defaults:\n" +
         to_json(RunConfig{}).dump(2) + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GMM/Frechet discriminator-free domain adaptation for multi-label classification"};
  app.require_subcommand(1);
  app.footer(defaults_footer());

  std::string config_path, out, data, checkpoint, seeds, gmm_out;
  double tau = 0.5;
  std::size_t bins = 20;
  bool wall_time = false;
  Overrides o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration JSON");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "Write source/target train/test CSVs + manifests");
  add_config(gen);
  gen->add_option("--out", out, "Output directory");
  gen->add_option("--seed", o.seed, "Override data.seed and train.seed");
  gen->add_option("--shift-strength", o.shift_strength, "Override data.shift_strength (0..1)");
  gen->add_option("--n-per-domain", o.n_per_domain, "Override data.n_per_domain");

  CLI::App* tr = app.add_subcommand("train", "Train one variant; write checkpoint, logs, report");
  add_config(tr);
  tr->add_option("--data", data, "Directory written by gen-data (or same layout)");
  tr->add_option("--out", out, "Output directory");
  tr->add_option("--variant", o.variant, "source_only | discriminator | dda_w1 | dda_frechet");
  tr->add_option("--epochs", o.epochs, "Override train.epochs");
  tr->add_option("--seed", o.seed, "Override data.seed and train.seed");
  tr->add_option("--lambda-max", o.lambda_max, "Override train.lambda_max");
  tr->add_flag("--log-wall-time", wall_time, "Include per-epoch wall time in epochs.jsonl");

  CLI::App* ev = app.add_subcommand("eval", "Score a checkpoint on a labeled split");
  ev->add_option("--checkpoint", checkpoint, "checkpoint.json")->required();
  ev->add_option("--data", data, "Split directory with features.csv and labels.csv")->required();
  ev->add_option("--tau", tau, "Decision threshold")->capture_default_str();
  ev->add_option("--out", out, "Also write the metrics as a CSV row here");

  CLI::App* hi = app.add_subcommand("hist", "Histogram of pooled predictions + fitted GMM");
  add_config(hi);
  hi->add_option("--checkpoint", checkpoint, "checkpoint.json")->required();
  hi->add_option("--data", data, "Split directory with features.csv")->required();
  hi->add_option("--bins", bins, "Number of bins over [0,1] (>= 2)")->capture_default_str();
  hi->add_option("--out", out, "Histogram CSV (bin_left,bin_right,count)")->required();
  hi->add_option("--gmm-out", gmm_out, "GMM JSON path (default: <out>.gmm.json)");

  CLI::App* ab = app.add_subcommand("ablate", "Train all four variants per seed; write mAP table");
  add_config(ab);
  ab->add_option("--seeds", seeds, "Comma-separated seeds, e.g. 1,2,3")->required();
  ab->add_option("--out", out, "Output CSV")->required();
  ab->add_option("--epochs", o.epochs, "Override train.epochs");
  ab->add_option("--lambda-max", o.lambda_max, "Override train.lambda_max");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = load_config(config_path, o);
      cmd_gen_data(cfg, require_path(out, cfg.out_path, "out"));
    } else if (tr->parsed()) {
      const RunConfig cfg = load_config(config_path, o);
      cmd_train(cfg, require_path(data, cfg.data_path, "data"),
                require_path(out, cfg.out_path, "out"), wall_time);
    } else if (ev->parsed()) {
      cmd_eval(checkpoint, data, tau, out);
    } else if (hi->parsed()) {
      cmd_hist(load_config(config_path, o), checkpoint, data, bins, out, gmm_out);
    } else if (ab->parsed()) {
      const RunConfig cfg = load_config(config_path, o);
      write_text_file(out, ablation_csv(run_ablation(cfg.data, cfg.train, parse_seeds(seeds))));
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}
