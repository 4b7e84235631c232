#pragma once

// The six pipeline commands.  Each returns a process exit status:
// 0 success, 1 runtime failure, 2 configuration error, 3 missing or invalid data.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "futurefeat/classifier.hpp"
#include "futurefeat/config.hpp"
#include "futurefeat/errors.hpp"
#include "futurefeat/labels.hpp"
#include "futurefeat/nets.hpp"
#include "futurefeat/rollout.hpp"
#include "futurefeat/segeval.hpp"
#include "futurefeat/selection.hpp"
#include "futurefeat/seqio.hpp"
#include "futurefeat/training.hpp"

namespace futurefeat::pipeline {

enum ExitCode : int { kOk = 0, kRuntime = 1, kConfig = 2, kData = 3 };

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

/// Runs `body`, mapping exceptions onto exit statuses.
template <class F>
int guarded(const char* command, Streams io, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    io.err << command << ": configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    io.err << command << ": data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    io.err << command << ": error: " << e.what() << '\n';
    return kRuntime;
  }
}

/// Re-throws data-loading failures as DataError.
template <class F>
auto as_data(F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

inline DatasetSplit load_split(const std::filesystem::path& dir) {
  return as_data([&] {
    DatasetSplit split;
    if (!std::filesystem::is_directory(dir / "train") && !std::filesystem::is_directory(dir / "test"))
      throw DataError("no train/ or test/ directory under " + dir.string());
    split.train = seqio::load_directory(dir / "train");
    split.test = seqio::load_directory(dir / "test");
    split.validate();
    return split;
  });
}

/// Duplicates everything written to it into two streams.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::ostream& a, std::ostream& b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c != traits_type::eof()) {
      a_.put(static_cast<char>(c));
      b_.put(static_cast<char>(c));
    }
    return c;
  }
  int sync() override {
    a_.flush();
    b_.flush();
    return 0;
  }

 private:
  std::ostream& a_;
  std::ostream& b_;
};

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (!std::filesystem::is_directory(dir)) throw IoError("cannot create directory: " + dir.string());
}

// ---------------------------------------------------------------------------

inline int cmd_synth(const PipelineConfig& cfg, Streams io = {}) {
  return guarded("synth", io, [&] {
    cfg.validate();
    const auto ds = seqio::synthesize_dataset(cfg.synth, cfg.seed);
    auto write = [&](const std::vector<FeatureSequence>& seqs, const std::vector<segeval::FrameLabels>& labels,
                     const char* sub) {
      const auto dir = cfg.data_dir / sub;
      ensure_dir(dir);
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        seqio::save_sequence(seqs[i], dir / (seqs[i].id + ".fseq"));
        segeval::save_labels(labels[i], dir / (seqs[i].id + ".labels"));
      }
    };
    write(ds.split.train, ds.train_labels, "train");
    write(ds.split.test, ds.test_labels, "test");
    io.out << "synth: wrote " << ds.split.train.size() << " train + " << ds.split.test.size() << " test "
           << seqio::to_string(cfg.synth.dynamics) << " sequences (k=" << cfg.synth.k << ", T=" << cfg.synth.frames
           << ") to " << cfg.data_dir.string() << '\n';
    return int{kOk};
  });
}

inline int cmd_train(const PipelineConfig& cfg, Streams io = {}) {
  return guarded("train", io, [&] {
    cfg.validate();
    const DatasetSplit split = load_split(cfg.data_dir);
    const std::size_t n = cfg.train.n, l = cfg.loss.l_rollout;
    if (split.train.empty()) throw DataError("no training sequences under " + (cfg.data_dir / "train").string());
    for (const auto& s : split.train)
      if (s.length() < n + l)
        throw DataError("training sequence '" + s.id + "' has " + std::to_string(s.length()) +
                        " frames; n + l_rollout = " + std::to_string(n + l) + " are required");
    for (const auto& s : split.test)
      if (s.length() < n + 1)
        throw DataError("test sequence '" + s.id + "' has " + std::to_string(s.length()) + " frames; n + 1 = " +
                        std::to_string(n + 1) + " are required");
    if (split.dim() < cfg.loss.log_kernel)
      throw DataError("feature dimension " + std::to_string(split.dim()) + " is smaller than log_kernel");
    const Scaler scaler = as_data([&] { return seqio::fit_scaler(split.train); });
    if (cfg.train.pool_test_into_train && split.test.empty())
      io.err << "train: --pool-test requested but the test split is empty; training on train only\n";

    ensure_dir(cfg.run_dir);
    std::ofstream log(cfg.run_dir / "train.log", std::ios::trunc);
    if (!log) throw IoError("cannot open " + (cfg.run_dir / "train.log").string());
    TeeBuf tee(log, io.out);
    std::ostream both(&tee);
    training::TrainOptions opts;
    opts.generator = cfg.generator;
    opts.discriminator.seed = cfg.seed + 1;
    opts.checkpoint_dir = cfg.checkpoint_dir();
    opts.log = &both;
    const auto run = training::train(split, cfg.train, cfg.loss, scaler, opts);
    selection::write_records_csv(run.records, cfg.records_path());
    io.out << "train: " << run.records.size() << " epochs, checkpoints in " << cfg.checkpoint_dir().string()
           << ", records in " << cfg.records_path().string() << '\n';
    return int{kOk};
  });
}

inline int cmd_select(const PipelineConfig& cfg, Streams io = {}) {
  return guarded("select", io, [&] {
    cfg.validate();
    if (!std::filesystem::exists(cfg.records_path()))
      throw DataError("records file not found: " + cfg.records_path().string() + " (run train first)");
    const auto records = as_data([&] { return selection::read_records_csv(cfg.records_path()); });
    if (records.size() < 2) throw DataError("selection needs at least 2 epochs of records");
    for (const auto& r : records)
      if (!r.test) throw DataError("epoch " + std::to_string(r.epoch) + " has no test metrics to select on");
    const auto outcome = selection::select_epoch_detailed(records, cfg.selection);
    if (outcome.clamped)
      io.err << "select: warning: only " << records.size() << " epochs recorded, using top_k=" << outcome.top_k_used
             << " instead of " << cfg.selection.top_k << '\n';
    seqio::detail::write_file_atomic(cfg.selected_path(), std::to_string(outcome.epoch) + "\n");
    io.out << outcome.epoch << '\n';
    return int{kOk};
  });
}

inline int read_selected_epoch(const PipelineConfig& cfg) {
  return as_data([&] {
    std::ifstream in(cfg.selected_path());
    if (!in) throw DataError("selected epoch not found: " + cfg.selected_path().string() + " (run select first)");
    int epoch = -1;
    if (!(in >> epoch) || epoch < 0) throw DataError("malformed " + cfg.selected_path().string());
    return epoch;
  });
}

inline int cmd_encode(const PipelineConfig& cfg, Streams io = {}) {
  return guarded("encode", io, [&] {
    cfg.validate();
    const int epoch = read_selected_epoch(cfg);
    const auto ckpt_path = training::checkpoint_path(cfg.checkpoint_dir(), epoch);
    if (!std::filesystem::exists(ckpt_path)) throw DataError("checkpoint not found: " + ckpt_path.string());
    const auto ckpt = as_data([&] { return nets::load_checkpoint<float>(ckpt_path); });
    const DatasetSplit split = load_split(cfg.data_dir);
    const auto& gc = ckpt.generator.config();
    if (split.dim() != gc.k)
      throw DataError("data dimension " + std::to_string(split.dim()) + " does not match checkpoint k=" +
                      std::to_string(gc.k));
    const auto manifest = rollout::encode_dataset(ckpt.generator, split, rollout::PredictionHorizon(cfg.horizon), gc.n,
                                                  cfg.encoded_dir());
    std::size_t failed = 0;
    for (const auto& r : manifest.rows)
      if (!r.error.empty()) {
        ++failed;
        io.err << "encode: " << r.id << ": " << r.error << '\n';
      }
    io.out << "encode: horizon " << cfg.horizon << ", epoch " << epoch << ", " << manifest.rows.size() - failed << "/"
           << manifest.rows.size() << " sequences written, manifest " << manifest.path.string() << '\n';
    return failed == 0 ? int{kOk} : int{kRuntime};
  });
}

/// Labels for a feature file: <labels_dir>/<stem>.labels, falling back to the
/// stem with a trailing `.enc<i>` removed.
inline std::filesystem::path labels_for(const FeatureSequence& seq, const std::filesystem::path& labels_dir) {
  auto direct = labels_dir / (seq.id + ".labels");
  if (std::filesystem::exists(direct)) return direct;
  static const std::regex enc(R"((.*)\.enc[0-9]+$)");
  std::smatch m;
  if (std::regex_match(seq.id, m, enc)) {
    auto base = labels_dir / (m[1].str() + ".labels");
    if (std::filesystem::exists(base)) return base;
  }
  throw DataError("no labels for sequence '" + seq.id + "' under " + labels_dir.string());
}

struct LabelledSet {
  std::vector<FeatureSequence> features;
  std::vector<segeval::FrameLabels> labels;

  std::vector<segeval::LabelledSequence> view() const {
    std::vector<segeval::LabelledSequence> out;
    for (std::size_t i = 0; i < features.size(); ++i) out.push_back({&features[i], &labels[i]});
    return out;
  }
};

inline LabelledSet load_labelled(const PipelineConfig& cfg, const char* sub) {
  return as_data([&] {
    LabelledSet set;
    const auto dir = cfg.features_dir() / sub;
    set.features = seqio::load_directory(dir);
    if (set.features.empty()) throw DataError("no feature files under " + dir.string());
    for (const auto& f : set.features) {
      auto labels = segeval::load_labels(labels_for(f, cfg.labels_dir() / sub), cfg.synth.classes);
      if (labels.size() != f.length())
        throw DataError("sequence '" + f.id + "' has " + std::to_string(f.length()) + " frames but " +
                        std::to_string(labels.size()) + " labels");
      set.labels.push_back(std::move(labels));
    }
    return set;
  });
}

inline void emit_report(const segeval::SegmentationReport& r, const std::filesystem::path& path, Streams io) {
  const std::string csv = segeval::report_csv(r);
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  seqio::detail::write_file_atomic(path, csv);
  io.out << csv;
}

inline int cmd_segtrain(const PipelineConfig& cfg, Streams io = {}) {
  return guarded("segtrain", io, [&] {
    cfg.validate();
    const auto set = load_labelled(cfg, "train");
    const auto view = set.view();
    auto trained = segeval::train_classifier(view, cfg.synth.classes, cfg.classifier);
    if (cfg.model_path().has_parent_path()) ensure_dir(cfg.model_path().parent_path());
    segeval::save_classifier(trained.model, cfg.model_path());
    io.err << "segtrain: " << segeval::to_string(cfg.classifier.mode) << " classifier, final loss "
           << selection::format_double(trained.epoch_loss.back()) << ", model " << cfg.model_path().string() << '\n';
    auto report_path = cfg.report_path();
    report_path.replace_filename(report_path.stem().string() + "_train" + report_path.extension().string());
    emit_report(segeval::evaluate(trained.model, view), report_path, io);
    return int{kOk};
  });
}

inline int cmd_segeval(const PipelineConfig& cfg, Streams io = {}) {
  return guarded("segeval", io, [&] {
    cfg.validate();
    if (!std::filesystem::exists(cfg.model_path()))
      throw DataError("classifier model not found: " + cfg.model_path().string() + " (run segtrain first)");
    const auto model = as_data([&] { return segeval::load_classifier(cfg.model_path()); });
    const auto set = load_labelled(cfg, "test");
    if (set.features.front().dim() != model.dim())
      throw DataError("feature dimension " + std::to_string(set.features.front().dim()) +
                      " does not match the classifier (" + std::to_string(model.dim()) + ")");
    emit_report(segeval::evaluate(model, set.view()), cfg.report_path(), io);
    return int{kOk};
  });
}

}  // namespace futurefeat::pipeline
