#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "futurefeat/config.hpp"
#include "futurefeat/pipeline.hpp"

namespace ff = futurefeat;

int main(int argc, char** argv) {
  CLI::App app{"futurefeat: future feature prediction for temporal action segmentation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string run_dir, data_dir;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "seed for every stochastic component");
  app.add_option("--run-dir", run_dir, "run directory (checkpoints, records, selection)");
  app.add_option("--data-dir", data_dir, "dataset directory with train/ and test/");
  app.add_option("--set", overrides, "extra KEY=VALUE assignment applied after the config file");

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  auto* train = app.add_subcommand("train", "train the generator, one checkpoint per epoch");
  bool pool_test = false;
  train->add_flag("--pool-test", pool_test, "also draw training windows from the test split");
  auto* select = app.add_subcommand("select", "choose the epoch to use from records.csv");
  auto* encode = app.add_subcommand("encode", "replace every frame by its i-step-ahead prediction");
  std::optional<long long> horizon;
  encode->add_option("--horizon", horizon, "prediction horizon i >= 1");

  std::string features, labels, model, report;
  auto* segtrain = app.add_subcommand("segtrain", "train the downstream frame classifier");
  auto* segeval = app.add_subcommand("segeval", "evaluate the downstream frame classifier");
  for (auto* sub : {segtrain, segeval}) {
    sub->add_option("--features", features, "feature directory with train/ and test/");
    sub->add_option("--labels", labels, "labels directory with train/ and test/");
    sub->add_option("--model", model, "classifier model file");
    sub->add_option("--report", report, "report CSV path");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ff::pipeline::kConfig;
  }

  ff::PipelineConfig cfg;
  try {
    if (!config_path.empty()) cfg = ff::load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ff::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
      ff::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.apply_seed(*seed);
    if (!run_dir.empty()) cfg.run_dir = run_dir;
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    if (pool_test) cfg.train.pool_test_into_train = true;
    if (horizon) {
      if (*horizon < 1) throw ff::ConfigError("--horizon must be >= 1, got " + std::to_string(*horizon));
      cfg.horizon = static_cast<std::size_t>(*horizon);
    }
    if (!features.empty()) cfg.seg_features = features;
    if (!labels.empty()) cfg.seg_labels = labels;
    if (!model.empty()) cfg.seg_model = model;
    if (!report.empty()) cfg.seg_report = report;
  } catch (const ff::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return ff::pipeline::kConfig;
  }

  if (*synth) return ff::pipeline::cmd_synth(cfg);
  if (*train) return ff::pipeline::cmd_train(cfg);
  if (*select) return ff::pipeline::cmd_select(cfg);
  if (*encode) return ff::pipeline::cmd_encode(cfg);
  if (*segtrain) return ff::pipeline::cmd_segtrain(cfg);
  return ff::pipeline::cmd_segeval(cfg);
}
