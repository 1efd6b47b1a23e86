// Command-line front end: synthetic data generation, training, evaluation,
// ablations, attention export, FLOP accounting, and residual-based anomaly
// flagging. Machine-readable outputs are CSV/JSON; human summaries go to
// stdout. Exit codes: 0 ok, 2 config error, 3 data error, 4 training
// divergence, 5 I/O error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "attnmixer/checkpoint.hpp"
#include "attnmixer/data.hpp"
#include "attnmixer/eval.hpp"
#include "attnmixer/metrics.hpp"
#include "attnmixer/model.hpp"
#include "attnmixer/train.hpp"

namespace {

using attnmixer::ConfigError;
using attnmixer::DataError;
using attnmixer::IoError;
using attnmixer::TrainError;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;
constexpr int kExitIo = 5;

struct Options {
  // model structure
  int window = 16;
  int variates = 8;
  int rounds = 2;
  int gru_hidden = 32;
  std::string smpr_mode = "entropy";
  double lambda = 1e-3;
  bool tie_qk = false;
  bool no_samp = false;
  bool no_tamp = false;
  std::uint64_t seed = 0;
  // training
  int horizon = 1;
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int patience = 15;
  // command I/O
  std::string config_file;
  std::string data_path;
  std::string ckpt_path;
  std::string out_path;
  std::string report_path;
  std::string graph_path;
  std::string spec_file;
  int steps = 4000;
  double quantile = 0.99;
  int sample = -1;
  bool raw_space = false;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

attnmixer::MixerConfig model_config(const Options& o, int variates) {
  attnmixer::MixerConfig cfg;
  cfg.window = o.window;
  cfg.variates = variates;
  cfg.rounds = o.rounds;
  cfg.gru_hidden = o.gru_hidden;
  cfg.smpr_mode = attnmixer::smpr_mode_from_string(o.smpr_mode);
  cfg.lambda = o.lambda;
  cfg.tie_qk = o.tie_qk;
  cfg.disable_samp = o.no_samp;
  cfg.disable_tamp = o.no_tamp;
  cfg.seed = o.seed;
  return cfg;
}

attnmixer::TrainOptions train_options(const Options& o) {
  attnmixer::TrainOptions t;
  t.horizon = o.horizon;
  t.max_epochs = o.epochs;
  t.batch_size = o.batch_size;
  t.learning_rate = o.learning_rate;
  t.patience = o.patience;
  return t;
}

json options_json(const Options& o) {
  return json{{"window", o.window},
              {"variates", o.variates},
              {"rounds", o.rounds},
              {"gru_hidden", o.gru_hidden},
              {"smpr_mode", o.smpr_mode},
              {"lambda", o.lambda},
              {"tie_qk", o.tie_qk},
              {"no_samp", o.no_samp},
              {"no_tamp", o.no_tamp},
              {"seed", o.seed},
              {"horizon", o.horizon},
              {"epochs", o.epochs},
              {"batch_size", o.batch_size},
              {"learning_rate", o.learning_rate},
              {"patience", o.patience},
              {"steps", o.steps},
              {"quantile", o.quantile}};
}

void echo_config(const std::string& command, const Options& o) {
  json j = options_json(o);
  j["command"] = command;
  std::cout << "config: " << j.dump() << "\n";
}

// JSON config file: same keys as the echoed config; command-line flags
// override whatever the file sets.
void preload_config(int argc, char** argv, Options& o) {
  std::string path;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") path = argv[i + 1];
  }
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config file '" + path + "': " + e.what());
  }
  const auto get = [&j](const char* key, auto& into) {
    if (j.contains(key)) into = j.at(key).get<std::decay_t<decltype(into)>>();
  };
  get("window", o.window);
  get("variates", o.variates);
  get("rounds", o.rounds);
  get("gru_hidden", o.gru_hidden);
  get("smpr_mode", o.smpr_mode);
  get("lambda", o.lambda);
  get("tie_qk", o.tie_qk);
  get("no_samp", o.no_samp);
  get("no_tamp", o.no_tamp);
  get("seed", o.seed);
  get("horizon", o.horizon);
  get("epochs", o.epochs);
  get("batch_size", o.batch_size);
  get("learning_rate", o.learning_rate);
  get("patience", o.patience);
  get("steps", o.steps);
  get("quantile", o.quantile);
  get("data", o.data_path);
  get("ckpt", o.ckpt_path);
  get("out", o.out_path);
}

attnmixer::SynthSpec spec_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed spec file '" + path + "': " + e.what());
  }
  attnmixer::SynthSpec spec;
  spec.variates = j.at("variates").get<int>();
  spec.steps = j.at("steps").get<int>();
  spec.coupling = j.at("coupling").get<std::vector<double>>();
  spec.driver_inject = j.at("driver_inject").get<std::vector<double>>();
  spec.kpi_weights = j.at("kpi_weights").get<std::vector<double>>();
  spec.driver_rho = j.value("driver_rho", spec.driver_rho);
  spec.shock_prob = j.value("shock_prob", spec.shock_prob);
  spec.shock_scale = j.value("shock_scale", spec.shock_scale);
  spec.driver_noise = j.value("driver_noise", spec.driver_noise);
  spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
  spec.init_value = j.value("init_value", spec.init_value);
  return spec;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<std::string, attnmixer::Metrics>>& rows,
                       int horizon) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "split,horizon,r2,rmse,mae\n";
  for (const auto& [name, m] : rows) {
    out << name << ',' << horizon << ',' << (m.r2 ? fmt(*m.r2) : "nan") << ',' << fmt(m.rmse)
        << ',' << fmt(m.mae) << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::string metrics_line(const attnmixer::Metrics& m) {
  return "r2=" + (m.r2 ? fmt(*m.r2) : std::string("undefined")) + " rmse=" + fmt(m.rmse) +
         " mae=" + fmt(m.mae) + " n=" + std::to_string(m.count);
}

struct LoadedModel {
  attnmixer::Checkpoint ckpt;
  attnmixer::SeriesFrame frame;
  attnmixer::Splits splits;  // on the scaled frame
  attnmixer::Scaler scaler;
};

// Shared preamble of eval/attention/anomaly: load checkpoint + CSV, rebuild
// the chronological splits and the train-split scaler deterministically.
LoadedModel load_model_and_data(const Options& o) {
  LoadedModel lm;
  lm.ckpt = attnmixer::load_checkpoint(o.ckpt_path);
  lm.frame = attnmixer::load_csv(o.data_path);
  if (lm.frame.variates() != lm.ckpt.config.variates) {
    throw ConfigError("checkpoint/config mismatch: checkpoint expects " +
                      std::to_string(lm.ckpt.config.variates) + " variates, data has " +
                      std::to_string(lm.frame.variates()));
  }
  auto raw_windows = attnmixer::make_windows(lm.frame, lm.ckpt.config.window, o.horizon);
  auto raw_splits = attnmixer::chrono_split(raw_windows);
  lm.scaler = attnmixer::Scaler::fit(raw_splits.train);
  auto scaled = std::make_shared<attnmixer::SeriesFrame>(lm.scaler.apply(lm.frame));
  lm.splits = attnmixer::chrono_split(
      attnmixer::make_windows(scaled, lm.ckpt.config.window, o.horizon));
  return lm;
}

int cmd_generate(const Options& o) {
  echo_config("generate", o);
  attnmixer::SynthSpec spec =
      o.spec_file.empty() ? attnmixer::SynthSpec::g1() : spec_from_file(o.spec_file);
  if (o.spec_file.empty()) spec.steps = o.steps;
  auto result = attnmixer::gen_synthetic(spec, o.seed);
  attnmixer::save_csv(result.frame, o.out_path);
  std::cout << "wrote " << result.frame.steps() << " steps x " << result.frame.variates()
            << " variates to " << o.out_path << "\n";
  if (!o.graph_path.empty()) {
    attnmixer::save_graph(result.graph, o.graph_path);
    std::cout << "wrote " << result.graph.edges.size() << " ground-truth edges to "
              << o.graph_path << "\n";
  }
  return kExitOk;
}

int cmd_train(const Options& o) {
  echo_config("train", o);
  attnmixer::SeriesFrame frame = attnmixer::load_csv(o.data_path);
  attnmixer::MixerConfig cfg = model_config(o, frame.variates());
  auto result = attnmixer::train(cfg, train_options(o), frame);

  attnmixer::save_checkpoint(o.ckpt_path, cfg, result.params);
  std::cout << "checkpoint: " << o.ckpt_path << "\n";
  if (!o.report_path.empty()) {
    std::ofstream out(o.report_path);
    if (!out) throw IoError("cannot open '" + o.report_path + "' for writing");
    out << "epoch,train_loss,val_mse\n";
    for (size_t e = 0; e < result.report.train_loss.size(); ++e) {
      out << e << ',' << fmt(result.report.train_loss[e]) << ','
          << fmt(result.report.val_mse[e]) << '\n';
    }
    std::cout << "report: " << o.report_path << "\n";
  }
  const auto& r = result.report;
  std::cout << "best_epoch=" << r.best_epoch << " stop_epoch=" << r.stop_epoch
            << " best_val_mse=" << fmt(r.best_val_mse) << "\n";
  std::cout << "test " << metrics_line(r.test_metrics) << "\n";
  std::cout << "wall_seconds=" << fmt(r.wall_seconds) << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o) {
  echo_config("eval", o);
  LoadedModel lm = load_model_and_data(o);

  std::vector<std::pair<std::string, attnmixer::Metrics>> rows;
  for (const auto& [name, split] :
       {std::pair<const char*, const attnmixer::WindowedDataset*>{"train", &lm.splits.train},
        {"val", &lm.splits.val},
        {"test", &lm.splits.test}}) {
    auto predicted = attnmixer::predict_all(*split, lm.ckpt.params, lm.ckpt.config);
    auto actual = attnmixer::targets_of(*split);
    if (o.raw_space) {
      for (auto& v : predicted) v = lm.scaler.unscale_kpi(v);
      for (auto& v : actual) v = lm.scaler.unscale_kpi(v);
    }
    rows.emplace_back(name, attnmixer::compute_metrics(actual, predicted));
  }
  write_metrics_csv(o.out_path, rows, o.horizon);
  for (const auto& [name, m] : rows) std::cout << name << " " << metrics_line(m) << "\n";
  std::cout << "metrics: " << o.out_path << "\n";
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  echo_config("ablate", o);
  attnmixer::SeriesFrame frame = attnmixer::load_csv(o.data_path);

  struct Variant {
    const char* name;
    void (*tweak)(attnmixer::MixerConfig&);
  };
  const Variant variants[] = {
      {"full", [](attnmixer::MixerConfig&) {}},
      {"no_samp", [](attnmixer::MixerConfig& c) { c.disable_samp = true; }},
      {"no_tamp", [](attnmixer::MixerConfig& c) { c.disable_tamp = true; }},
      {"no_smpr", [](attnmixer::MixerConfig& c) { c.lambda = 0.0; }},
      {"tied_qk", [](attnmixer::MixerConfig& c) { c.tie_qk = true; }},
  };

  std::ofstream out(o.out_path);
  if (!out) throw IoError("cannot open '" + o.out_path + "' for writing");
  out << "variant,r2,rmse,mae\n";
  for (const auto& variant : variants) {
    attnmixer::MixerConfig cfg = model_config(o, frame.variates());
    variant.tweak(cfg);
    auto result = attnmixer::train(cfg, train_options(o), frame);
    const auto& m = result.report.test_metrics;
    out << variant.name << ',' << (m.r2 ? fmt(*m.r2) : "nan") << ',' << fmt(m.rmse) << ','
        << fmt(m.mae) << '\n';
    std::cout << variant.name << " " << metrics_line(m) << " (best epoch "
              << result.report.best_epoch << ")\n";
  }
  if (!out) throw IoError("write to '" + o.out_path + "' failed");
  std::cout << "table: " << o.out_path << "\n";
  return kExitOk;
}

int cmd_attention(const Options& o) {
  echo_config("attention", o);
  LoadedModel lm = load_model_and_data(o);

  attnmixer::AttentionRecord record;
  if (o.sample >= 0) {
    if (o.sample >= lm.splits.test.size()) {
      throw ConfigError("sample index " + std::to_string(o.sample) + " out of range (" +
                        std::to_string(lm.splits.test.size()) + " test samples)");
    }
    record = attnmixer::mixer_forward(lm.splits.test.input(o.sample), lm.ckpt.params,
                                      lm.ckpt.config, true)
                 .record;
  } else {
    record = attnmixer::average_attention(lm.splits.test, lm.ckpt.params, lm.ckpt.config);
  }
  attnmixer::export_attention(record, lm.ckpt.config, o.out_path);
  std::cout << "attention: " << o.out_path << "\n";

  std::optional<attnmixer::GroundTruthGraph> graph;
  if (!o.graph_path.empty()) graph = attnmixer::load_graph(o.graph_path);
  auto stats = attnmixer::attention_stats(record, graph ? &*graph : nullptr);
  for (size_t k = 0; k < stats.spatial.size(); ++k) {
    const auto& s = stats.spatial[k];
    std::cout << "round " << k << " m_s entropy=" << fmt(s.mean_row_entropy)
              << " gini=" << fmt(s.gini) << " top1=" << fmt(s.top_mass) << "\n";
  }
  for (size_t k = 0; k < stats.temporal.size(); ++k) {
    const auto& s = stats.temporal[k];
    std::cout << "round " << k << " m_t entropy=" << fmt(s.mean_row_entropy)
              << " gini=" << fmt(s.gini) << " top1=" << fmt(s.top_mass) << "\n";
  }
  if (stats.true_edge_mass_ratio) {
    std::cout << "true_edge_mass_ratio=" << fmt(*stats.true_edge_mass_ratio) << "\n";
  }
  return kExitOk;
}

int cmd_flops(const Options& o) {
  echo_config("flops", o);
  attnmixer::MixerConfig cfg = model_config(o, o.variates);
  attnmixer::FlopReport report = attnmixer::count_flops(cfg);
  std::cout << "samp=" << report.samp << " tamp=" << report.tamp
            << " decoder=" << report.decoder << " total=" << report.total << "\n";

  // Cross-check the closed form against an instrumented forward pass.
  attnmixer::MixerParams params = attnmixer::init_params(cfg);
  attnmixer::Tensor input(cfg.window, cfg.variates);
  attnmixer::reset_flop_count();
  attnmixer::mixer_forward(input, params, cfg, false);
  const std::uint64_t measured = attnmixer::flop_count();
  if (measured != report.total) {
    std::cout << "verification FAILED: instrumented=" << measured << "\n";
    return 1;
  }
  std::cout << "verified: instrumented forward count matches (" << measured << ")\n";
  return kExitOk;
}

int cmd_anomaly(const Options& o) {
  echo_config("anomaly", o);
  LoadedModel lm = load_model_and_data(o);
  const auto& cfg = lm.ckpt.config;

  auto val_pred = attnmixer::predict_all(lm.splits.val, lm.ckpt.params, cfg);
  auto val_actual = attnmixer::targets_of(lm.splits.val);
  std::vector<double> calibration(val_pred.size());
  for (size_t i = 0; i < val_pred.size(); ++i) {
    calibration[i] = std::fabs(val_actual[i] - val_pred[i]);
  }

  auto test_pred = attnmixer::predict_all(lm.splits.test, lm.ckpt.params, cfg);
  auto test_actual = attnmixer::targets_of(lm.splits.test);
  auto verdict = attnmixer::anomaly_score(test_actual, test_pred, calibration, o.quantile);

  std::ofstream out(o.out_path);
  if (!out) throw IoError("cannot open '" + o.out_path + "' for writing");
  out << "timestamp,residual,threshold\n";
  int flagged = 0;
  for (size_t i = 0; i < verdict.flags.size(); ++i) {
    if (!verdict.flags[i]) continue;
    ++flagged;
    const int row = lm.splits.test.target_row(static_cast<int>(i));
    out << lm.frame.timestamps[row] << ',' << fmt(verdict.residuals[i]) << ','
        << fmt(verdict.threshold) << '\n';
  }
  if (!out) throw IoError("write to '" + o.out_path + "' failed");
  std::cout << "threshold=" << fmt(verdict.threshold) << " flagged=" << flagged << "/"
            << verdict.flags.size() << "\n";
  std::cout << "flags: " << o.out_path << "\n";
  return kExitOk;
}

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--T,--window", o.window, "window length (steps per sample)");
  cmd->add_option("--K,--rounds", o.rounds, "message-passing rounds");
  cmd->add_option("--gru-hidden", o.gru_hidden, "decoder hidden width");
  cmd->add_option("--smpr-mode", o.smpr_mode, "sparsity penalty: literal|entropy")
      ->check(CLI::IsMember({"literal", "entropy"}));
  cmd->add_option("--lambda", o.lambda, "sparsity penalty strength");
  cmd->add_flag("--tie-qk", o.tie_qk, "share query/key maps (undirected attention)");
  cmd->add_flag("--no-samp", o.no_samp, "disable the spatial block");
  cmd->add_flag("--no-tamp", o.no_tamp, "disable the temporal block");
  cmd->add_option("--seed", o.seed, "seed for every random choice");
}

void add_train_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--H,--horizon", o.horizon, "forecast horizon");
  cmd->add_option("--epochs", o.epochs, "maximum training epochs");
  cmd->add_option("--batch-size", o.batch_size, "minibatch size");
  cmd->add_option("--lr", o.learning_rate, "Adam learning rate");
  cmd->add_option("--patience", o.patience, "early-stopping patience (epochs)");
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"AttentionMixer process-monitoring toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.add_option("--config", o.config_file, "JSON config file; flags override its values");

  auto* generate = app.add_subcommand("generate", "write a synthetic monitoring log");
  generate->add_option("--out", o.out_path, "output CSV path")->required();
  generate->add_option("--graph-out", o.graph_path, "ground-truth edge JSON path");
  generate->add_option("--steps", o.steps, "steps to generate");
  generate->add_option("--spec-file", o.spec_file, "full SynthSpec JSON (overrides preset)");
  generate->add_option("--seed", o.seed, "generator seed");

  auto* train = app.add_subcommand("train", "train a model and save a checkpoint");
  train->add_option("--data", o.data_path, "input CSV")->required();
  train->add_option("--ckpt", o.ckpt_path, "output checkpoint JSON")->required();
  train->add_option("--report", o.report_path, "per-epoch loss curve CSV");
  add_model_flags(train, o);
  add_train_flags(train, o);

  auto* eval = app.add_subcommand("eval", "metrics CSV for all splits of a dataset");
  eval->add_option("--ckpt", o.ckpt_path, "checkpoint JSON")->required();
  eval->add_option("--data", o.data_path, "input CSV")->required();
  eval->add_option("--out", o.out_path, "metrics CSV path")->required();
  eval->add_option("--H,--horizon", o.horizon, "forecast horizon");
  eval->add_flag("--raw-space", o.raw_space, "report metrics in unscaled units");

  auto* ablate = app.add_subcommand("ablate", "train all ablation variants and tabulate");
  ablate->add_option("--data", o.data_path, "input CSV")->required();
  ablate->add_option("--out", o.out_path, "comparison table CSV")->required();
  add_model_flags(ablate, o);
  add_train_flags(ablate, o);

  auto* attention = app.add_subcommand("attention", "export captured attention + stats");
  attention->add_option("--ckpt", o.ckpt_path, "checkpoint JSON")->required();
  attention->add_option("--data", o.data_path, "input CSV")->required();
  attention->add_option("--out", o.out_path, "attention JSON path")->required();
  attention->add_option("--graph", o.graph_path, "ground-truth edge JSON for recovery stats");
  attention->add_option("--sample", o.sample,
                        "test sample index (default: average over the test split)");
  attention->add_option("--H,--horizon", o.horizon, "forecast horizon");

  auto* flops = app.add_subcommand("flops", "closed-form FLOP count, verified");
  flops->add_option("--T,--window", o.window, "window length");
  flops->add_option("--D,--variates", o.variates, "variate count");
  flops->add_option("--K,--rounds", o.rounds, "message-passing rounds");
  flops->add_option("--gru-hidden", o.gru_hidden, "decoder hidden width");
  flops->add_flag("--no-samp", o.no_samp, "disable the spatial block");
  flops->add_flag("--no-tamp", o.no_tamp, "disable the temporal block");

  auto* anomaly = app.add_subcommand("anomaly", "flag test steps by forecast residual");
  anomaly->add_option("--ckpt", o.ckpt_path, "checkpoint JSON")->required();
  anomaly->add_option("--data", o.data_path, "input CSV")->required();
  anomaly->add_option("--out", o.out_path, "flagged timestamps CSV")->required();
  anomaly->add_option("--q,--quantile", o.quantile, "calibration quantile in (0,1)");
  anomaly->add_option("--H,--horizon", o.horizon, "forecast horizon");

  try {
    preload_config(argc, argv, o);
    app.parse(argc, argv);
    if (generate->parsed()) return cmd_generate(o);
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (attention->parsed()) return cmd_attention(o);
    if (flops->parsed()) return cmd_flops(o);
    if (anomaly->parsed()) return cmd_anomaly(o);
    return kExitConfig;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const attnmixer::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
