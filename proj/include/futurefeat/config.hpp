#pragma once

// Flat `key = value` pipeline configuration.  `#` starts a comment; blank
// lines are ignored; unknown keys and malformed values are errors.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "futurefeat/classifier.hpp"
#include "futurefeat/errors.hpp"
#include "futurefeat/nets.hpp"
#include "futurefeat/selection.hpp"
#include "futurefeat/seqio.hpp"
#include "futurefeat/simmetrics.hpp"
#include "futurefeat/training.hpp"

namespace futurefeat {

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path data_dir = "data";
  std::filesystem::path run_dir = "run";

  seqio::SynthSpec synth;
  training::TrainConfig train;
  training::LossConfig loss;
  nets::GeneratorConfig generator;
  selection::SelectionConfig selection{25, false, {}};
  std::size_t horizon = 1;
  /// Defaults to <run_dir>/encoded_h<horizon>.
  std::optional<std::filesystem::path> encode_dir;

  segeval::ClassifierConfig classifier;
  /// Feature directory for segtrain/segeval (with train/ and test/ below);
  /// defaults to data_dir.
  std::optional<std::filesystem::path> seg_features;
  /// Directory holding <stem>.labels files (train/ and test/ below);
  /// defaults to data_dir.
  std::optional<std::filesystem::path> seg_labels;
  /// Defaults to <run_dir>/segmodel.fseg and <run_dir>/seg_report.csv.
  std::optional<std::filesystem::path> seg_model;
  std::optional<std::filesystem::path> seg_report;

  std::filesystem::path checkpoint_dir() const { return run_dir / "checkpoints"; }
  std::filesystem::path records_path() const { return run_dir / "records.csv"; }
  std::filesystem::path selected_path() const { return run_dir / "selected_epoch.txt"; }
  std::filesystem::path encoded_dir() const {
    return encode_dir ? *encode_dir : run_dir / ("encoded_h" + std::to_string(horizon));
  }
  std::filesystem::path features_dir() const { return seg_features ? *seg_features : data_dir; }
  std::filesystem::path labels_dir() const { return seg_labels ? *seg_labels : data_dir; }
  std::filesystem::path model_path() const { return seg_model ? *seg_model : run_dir / "segmodel.fseg"; }
  std::filesystem::path report_path() const { return seg_report ? *seg_report : run_dir / "seg_report.csv"; }

  /// Seeds of every stochastic component derive from `seed`.
  void apply_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
    generator.seed = s;
    classifier.seed = s;
  }

  /// Checks every module's preconditions; throws ConfigError.
  void validate() const {
    auto guard = [](const char* what, auto&& fn) {
      try {
        fn();
      } catch (const ValidationError& e) {
        throw ConfigError(std::string(what) + ": " + e.what());
      }
    };
    guard("synth", [&] { synth.validate(); });
    guard("train", [&] { train.validate(); });
    guard("loss", [&] { loss.validate(); });
    guard("classifier", [&] { classifier.validate(); });
    guard("generator", [&] {
      nets::GeneratorConfig g = generator;
      g.k = synth.k;
      g.n = train.n;
      g.validate();
    });
    if (selection.top_k < 1) throw ConfigError("top_k: must be >= 1");
    if (selection.metrics.count() == 0) throw ConfigError("selection_metrics: at least one metric required");
    if (horizon < 1) throw ConfigError("horizon: must be >= 1");
    if (loss.log_kernel > synth.k) throw ConfigError("log_kernel: must not exceed k");
  }
};

namespace config_detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  if (!v.empty() && v[0] == '-') throw ConfigError(key + ": must be non-negative, got '" + v + "'");
  return parse_int<std::size_t>(key, v);
}

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline selection::MetricMask parse_metrics(const std::string& key, const std::string& v) {
  selection::MetricMask m{false, false, false};
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "mse") m.mse = true;
    else if (item == "psnr") m.psnr = true;
    else if (item == "ssim") m.ssim = true;
    else throw ConfigError(key + ": unknown metric '" + item + "' (expected mse, psnr, ssim)");
  }
  return m;
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_field = [](auto get) {
      return [get](PipelineConfig& c, const std::string& k, const std::string& v) { get(c) = parse_size(k, v); };
    };
    auto double_field = [](auto get) {
      return [get](PipelineConfig& c, const std::string& k, const std::string& v) { get(c) = parse_double(k, v); };
    };
    auto path_field = [](auto get) {
      return [get](PipelineConfig& c, const std::string&, const std::string& v) { get(c) = std::filesystem::path(v); };
    };
    t["seed"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.apply_seed(parse_int<std::uint64_t>(k, v));
    };
    t["data_dir"] = path_field([](PipelineConfig& c) -> auto& { return c.data_dir; });
    t["run_dir"] = path_field([](PipelineConfig& c) -> auto& { return c.run_dir; });

    t["k"] = size_field([](PipelineConfig& c) -> auto& { return c.synth.k; });
    t["frames"] = size_field([](PipelineConfig& c) -> auto& { return c.synth.frames; });
    t["train_count"] = size_field([](PipelineConfig& c) -> auto& { return c.synth.train_count; });
    t["test_count"] = size_field([](PipelineConfig& c) -> auto& { return c.synth.test_count; });
    t["dynamics"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      try {
        c.synth.dynamics = seqio::parse_dynamics(v);
      } catch (const ValidationError& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    t["noise"] = double_field([](PipelineConfig& c) -> auto& { return c.synth.noise; });
    t["rho"] = double_field([](PipelineConfig& c) -> auto& { return c.synth.rho; });
    t["omega_min"] = double_field([](PipelineConfig& c) -> auto& { return c.synth.omega_min; });
    t["omega_max"] = double_field([](PipelineConfig& c) -> auto& { return c.synth.omega_max; });
    t["classes"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.synth.classes = parse_int<int>(k, v);
    };
    t["label_lead"] = size_field([](PipelineConfig& c) -> auto& { return c.synth.label_lead; });

    t["lr"] = double_field([](PipelineConfig& c) -> auto& { return c.train.lr; });
    t["beta1"] = double_field([](PipelineConfig& c) -> auto& { return c.train.beta1; });
    t["beta2"] = double_field([](PipelineConfig& c) -> auto& { return c.train.beta2; });
    t["batch_size"] = size_field([](PipelineConfig& c) -> auto& { return c.train.batch_size; });
    t["epochs"] = size_field([](PipelineConfig& c) -> auto& { return c.train.epochs; });
    t["n"] = size_field([](PipelineConfig& c) -> auto& { return c.train.n; });
    t["steps_per_epoch"] = size_field([](PipelineConfig& c) -> auto& { return c.train.steps_per_epoch; });
    t["pool_test_into_train"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.train.pool_test_into_train = parse_bool(k, v);
    };
    t["psnr_variant"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      if (v == "paper") c.train.psnr = simmetrics::PsnrVariant::Paper;
      else if (v == "standard") c.train.psnr = simmetrics::PsnrVariant::Standard;
      else throw ConfigError(k + ": expected paper or standard, got '" + v + "'");
    };

    t["lambda_seq"] = double_field([](PipelineConfig& c) -> auto& { return c.loss.lambda_seq; });
    t["lambda_recon"] = double_field([](PipelineConfig& c) -> auto& { return c.loss.lambda_recon; });
    t["lambda_log"] = double_field([](PipelineConfig& c) -> auto& { return c.loss.lambda_log; });
    t["lambda_adv"] = double_field([](PipelineConfig& c) -> auto& { return c.loss.lambda_adv; });
    t["l_rollout"] = size_field([](PipelineConfig& c) -> auto& { return c.loss.l_rollout; });
    t["log_sigma"] = double_field([](PipelineConfig& c) -> auto& { return c.loss.log_sigma; });
    t["log_kernel"] = size_field([](PipelineConfig& c) -> auto& { return c.loss.log_kernel; });

    t["base_channels"] = size_field([](PipelineConfig& c) -> auto& { return c.generator.base_channels; });
    t["trunk_channels"] = size_field([](PipelineConfig& c) -> auto& { return c.generator.trunk_channels; });
    t["bottleneck_channels"] = size_field([](PipelineConfig& c) -> auto& { return c.generator.bottleneck_channels; });
    t["n_res_blocks"] = size_field([](PipelineConfig& c) -> auto& { return c.generator.n_res_blocks; });

    t["top_k"] = size_field([](PipelineConfig& c) -> auto& { return c.selection.top_k; });
    t["selection_strict"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.selection.strict = parse_bool(k, v);
    };
    t["selection_metrics"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      c.selection.metrics = parse_metrics(k, v);
    };
    t["horizon"] = size_field([](PipelineConfig& c) -> auto& { return c.horizon; });
    t["encode_dir"] = path_field([](PipelineConfig& c) -> auto& { return c.encode_dir; });

    t["seg_mode"] = [](PipelineConfig& c, const std::string& k, const std::string& v) {
      try {
        c.classifier.mode = segeval::parse_classifier_mode(v);
      } catch (const ValidationError& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    t["seg_stages"] = size_field([](PipelineConfig& c) -> auto& { return c.classifier.stages; });
    t["seg_layers"] = size_field([](PipelineConfig& c) -> auto& { return c.classifier.layers; });
    t["seg_channels"] = size_field([](PipelineConfig& c) -> auto& { return c.classifier.channels; });
    t["seg_epochs"] = size_field([](PipelineConfig& c) -> auto& { return c.classifier.epochs; });
    t["seg_lr"] = double_field([](PipelineConfig& c) -> auto& { return c.classifier.lr; });
    t["seg_features"] = path_field([](PipelineConfig& c) -> auto& { return c.seg_features; });
    t["seg_labels"] = path_field([](PipelineConfig& c) -> auto& { return c.seg_labels; });
    t["seg_model"] = path_field([](PipelineConfig& c) -> auto& { return c.seg_model; });
    t["seg_report"] = path_field([](PipelineConfig& c) -> auto& { return c.seg_report; });
    return t;
  }();
  return table;
}

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : config_detail::setters()) out.push_back(k);
  return out;
}

/// Applies one assignment on top of `cfg`.
inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = config_detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

inline PipelineConfig parse_config(std::string_view text, PipelineConfig cfg = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": missing key");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace futurefeat
