#pragma once

// Downstream per-frame classifier used to compare original and encoded
// features: a small multi-stage dilated temporal convolution network, or a
// memoryless linear probe that sees one frame at a time.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "futurefeat/autodiff.hpp"
#include "futurefeat/errors.hpp"
#include "futurefeat/labels.hpp"
#include "futurefeat/nets.hpp"
#include "futurefeat/optim.hpp"
#include "futurefeat/segeval.hpp"
#include "futurefeat/seqio.hpp"

namespace futurefeat::segeval {

enum class ClassifierMode { Temporal, Memoryless };

inline ClassifierMode parse_classifier_mode(std::string_view s) {
  if (s == "temporal" || s == "mstcn") return ClassifierMode::Temporal;
  if (s == "memoryless" || s == "linear") return ClassifierMode::Memoryless;
  throw ValidationError("classifier mode must be 'temporal' or 'memoryless', got '" + std::string(s) + "'");
}

inline std::string to_string(ClassifierMode m) { return m == ClassifierMode::Temporal ? "temporal" : "memoryless"; }

struct ClassifierConfig {
  ClassifierMode mode = ClassifierMode::Temporal;
  std::size_t stages = 2;
  std::size_t layers = 6;
  std::size_t channels = 32;
  std::size_t epochs = 50;
  double lr = 0.005;
  std::uint64_t seed = 0;

  void validate() const {
    using futurefeat::detail::require;
    require(stages >= 1 && layers >= 1 && channels >= 1, "classifier: stages, layers and channels must be >= 1");
    require(layers <= 16, "classifier: at most 16 dilated layers");
    require(epochs >= 1, "classifier: epochs must be >= 1");
    require(lr > 0.0, "classifier: lr must be positive");
  }
};

/// One labelled sequence.
struct LabelledSequence {
  const FeatureSequence* features = nullptr;
  const FrameLabels* labels = nullptr;
};

class Classifier {
 public:
  using T = float;

  Classifier(std::size_t k, int classes, const ClassifierConfig& cfg) : cfg_(cfg), k_(k), classes_(classes) {
    cfg.validate();
    futurefeat::detail::require(k >= 1 && classes >= 1, "classifier: k and classes must be positive");
    mean_.assign(k, 0.0f);
    inv_std_.assign(k, 1.0f);
    std::mt19937_64 rng(cfg.seed);
    const auto C = static_cast<std::size_t>(classes);
    if (cfg.mode == ClassifierMode::Memoryless) {
      probe_.emplace("probe", k, C, 1, 1, true, rng);
      return;
    }
    for (std::size_t s = 0; s < cfg.stages; ++s) {
      Stage st;
      const std::string p = "stage" + std::to_string(s);
      st.in = nets::layers::Conv<T>(p + ".in", s == 0 ? k : C, cfg.channels, 1, 1, true, rng);
      for (std::size_t i = 0; i < cfg.layers; ++i) {
        const std::string q = p + ".layer" + std::to_string(i);
        st.dilated.emplace_back(q + ".dilated", cfg.channels, cfg.channels, 3, 1, true, rng);
        st.pointwise.emplace_back(q + ".pointwise", cfg.channels, cfg.channels, 1, 1, true, rng);
      }
      st.out = nets::layers::Conv<T>(p + ".out", cfg.channels, C, 1, 1, true, rng);
      stages_.push_back(std::move(st));
    }
  }

  const ClassifierConfig& config() const { return cfg_; }
  std::size_t dim() const { return k_; }
  int classes() const { return classes_; }

  /// Per-dimension standardisation applied before the network.
  void set_normalisation(std::vector<float> mean, std::vector<float> inv_std) {
    futurefeat::detail::require(mean.size() == k_ && inv_std.size() == k_, "classifier: normalisation size mismatch");
    mean_ = std::move(mean);
    inv_std_ = std::move(inv_std);
  }
  const std::vector<float>& mean() const { return mean_; }
  const std::vector<float>& inv_std() const { return inv_std_; }

  ad::Tensor<T> input_signal(const FeatureSequence& seq) const {
    futurefeat::detail::require(seq.dim() == k_, "classifier: sequence '" + seq.id + "' has dimension " +
                                                     std::to_string(seq.dim()) + ", model expects " + std::to_string(k_));
    const std::size_t L = seq.length();
    ad::Tensor<T> x({1, k_, L});
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < k_; ++c)
        x.at3(0, c, t) = (seq.frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) - mean_[c]) * inv_std_[c];
    return x;
  }

  /// Logits [1, C, T] of every stage, last stage last.
  std::vector<ad::Var> forward(ad::Tape<T>& tape, ad::Var x) const {
    if (probe_) return {(*probe_)(tape, x)};
    std::vector<ad::Var> outs;
    ad::Var h_in = x;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const Stage& st = stages_[s];
      if (s > 0) h_in = ad::softmax_channels(tape, outs.back());
      ad::Var h = st.in(tape, h_in);
      for (std::size_t i = 0; i < st.dilated.size(); ++i) {
        const std::size_t d = std::size_t{1} << i;
        ad::Var z = ad::relu(tape, st.dilated[i].run(tape, h, ad::ConvOptions{1, d, d, d}));
        h = ad::add(tape, h, st.pointwise[i](tape, z));
      }
      outs.push_back(st.out(tape, h));
    }
    return outs;
  }

  std::vector<int> predict(const FeatureSequence& seq) const {
    ad::Tape<T> tape(false);
    const auto outs = forward(tape, tape.constant(input_signal(seq)));
    const auto& logits = tape.value(outs.back());
    const std::size_t L = seq.length();
    std::vector<int> labels(L);
    for (std::size_t t = 0; t < L; ++t) {
      int best = 0;
      for (int c = 1; c < classes_; ++c)
        if (logits.at3(0, static_cast<std::size_t>(c), t) > logits.at3(0, static_cast<std::size_t>(best), t)) best = c;
      labels[t] = best;
    }
    return labels;
  }

  std::vector<ad::Parameter<T>*> mutable_parameters() {
    std::vector<ad::Parameter<T>*> out;
    if (probe_) probe_->collect(out);
    for (auto& st : stages_) {
      st.in.collect(out);
      for (std::size_t i = 0; i < st.dilated.size(); ++i) {
        st.dilated[i].collect(out);
        st.pointwise[i].collect(out);
      }
      st.out.collect(out);
    }
    return out;
  }

  std::vector<const ad::Parameter<T>*> parameters() const {
    auto raw = const_cast<Classifier*>(this)->mutable_parameters();
    return {raw.begin(), raw.end()};
  }

 private:
  struct Stage {
    nets::layers::Conv<T> in, out;
    std::vector<nets::layers::Conv<T>> dilated, pointwise;
  };

  ClassifierConfig cfg_;
  std::size_t k_;
  int classes_;
  std::vector<float> mean_, inv_std_;
  std::optional<nets::layers::Conv<T>> probe_;
  std::vector<Stage> stages_;
};

namespace detail {

inline void check_pairs(std::span<const LabelledSequence> data, const char* who) {
  futurefeat::detail::require(!data.empty(), std::string(who) + ": no sequences");
  const std::size_t k = data.front().features->dim();
  for (const auto& d : data) {
    futurefeat::detail::require(d.features && d.labels, std::string(who) + ": missing features or labels");
    futurefeat::detail::require(d.features->dim() == k, std::string(who) + ": sequences differ in dimension");
    futurefeat::detail::require(d.labels->size() == d.features->length(),
                                std::string(who) + ": sequence '" + d.features->id + "' has " +
                                    std::to_string(d.features->length()) + " frames but " +
                                    std::to_string(d.labels->size()) + " labels");
  }
}

}  // namespace detail

struct TrainedClassifier {
  Classifier model;
  /// Mean training loss of every epoch.
  std::vector<double> epoch_loss;
};

/// Adam on the mean per-frame cross-entropy over all stages, one update per
/// sequence, sequences shuffled every epoch.
inline TrainedClassifier train_classifier(std::span<const LabelledSequence> data, int classes,
                                          const ClassifierConfig& cfg) {
  detail::check_pairs(data, "train_classifier");
  futurefeat::detail::require(classes >= 1, "train_classifier: classes must be positive");
  for (const auto& d : data) {
    d.labels->validate();
    futurefeat::detail::require(d.labels->classes <= classes, "train_classifier: labels exceed class count");
  }
  const std::size_t k = data.front().features->dim();
  Classifier model(k, classes, cfg);

  std::vector<double> sum(k, 0.0), sq(k, 0.0);
  double frames = 0.0;
  for (const auto& d : data)
    for (Eigen::Index t = 0; t < d.features->frames.rows(); ++t) {
      for (std::size_t c = 0; c < k; ++c) {
        const double x = d.features->frames(t, static_cast<Eigen::Index>(c));
        sum[c] += x;
        sq[c] += x * x;
      }
      frames += 1.0;
    }
  std::vector<float> mean(k), inv_std(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double mu = sum[c] / frames;
    const double var = std::max(sq[c] / frames - mu * mu, 0.0);
    mean[c] = static_cast<float>(mu);
    inv_std[c] = var > 1e-12 ? static_cast<float>(1.0 / std::sqrt(var)) : 1.0f;
  }
  model.set_normalisation(std::move(mean), std::move(inv_std));

  TrainedClassifier out{std::move(model), {}};
  optim::Adam<float> opt(optim::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  const auto params = out.model.mutable_parameters();
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<ad::Tensor<float>> inputs;
  for (const auto& d : data) inputs.push_back(out.model.input_signal(*d.features));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      ad::Tape<float> tape;
      const auto outs = out.model.forward(tape, tape.constant(inputs[idx]));
      const std::span<const int> ys(data[idx].labels->labels);
      ad::Var loss = ad::cross_entropy(tape, outs[0], ys);
      for (std::size_t s = 1; s < outs.size(); ++s) loss = ad::add(tape, loss, ad::cross_entropy(tape, outs[s], ys));
      loss = ad::scale(tape, loss, 1.0f / static_cast<float>(outs.size()));
      total += tape.value(loss)[0];
      opt.step(params, tape.backward(loss));
    }
    out.epoch_loss.push_back(total / static_cast<double>(data.size()));
  }
  return out;
}

struct SegmentationReport {
  double acc = 0.0;  ///< [0, 1], frame-weighted over all sequences
  double edit = 0.0;
  double f1_10 = 0.0;
  double f1_25 = 0.0;
  double f1_50 = 0.0;
};

/// Acc pools frames across sequences; Edit and F1 are per-sequence means.
inline SegmentationReport report_from_predictions(std::span<const FrameLabels> gt, std::span<const std::vector<int>> pred) {
  futurefeat::detail::require(!gt.empty() && gt.size() == pred.size(), "evaluate: need matching, non-empty inputs");
  SegmentationReport r;
  std::size_t hits = 0, frames = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto& g = gt[i].labels;
    const auto& p = pred[i];
    hits += static_cast<std::size_t>(std::llround(frame_accuracy(g, p) * static_cast<double>(g.size())));
    frames += g.size();
    r.edit += edit_score(g, p);
    r.f1_10 += f1_at_k(g, p, 0.10);
    r.f1_25 += f1_at_k(g, p, 0.25);
    r.f1_50 += f1_at_k(g, p, 0.50);
  }
  const double n = static_cast<double>(gt.size());
  r.acc = static_cast<double>(hits) / static_cast<double>(frames);
  r.edit /= n;
  r.f1_10 /= n;
  r.f1_25 /= n;
  r.f1_50 /= n;
  return r;
}

inline SegmentationReport evaluate(const Classifier& model, std::span<const LabelledSequence> data) {
  detail::check_pairs(data, "evaluate");
  futurefeat::detail::require(data.front().features->dim() == model.dim(), "evaluate: feature dimension does not match the model");
  std::vector<FrameLabels> gt;
  std::vector<std::vector<int>> pred;
  for (const auto& d : data) {
    gt.push_back(*d.labels);
    pred.push_back(model.predict(*d.features));
  }
  return report_from_predictions(gt, pred);
}

inline std::string report_csv(const SegmentationReport& r) {
  std::string out = "metric,value\n";
  auto row = [&](const char* name, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s,%.17g\n", name, v);
    out += buf;
  };
  row("Acc", r.acc);
  row("Edit", r.edit);
  row("F1@10", r.f1_10);
  row("F1@25", r.f1_25);
  row("F1@50", r.f1_50);
  return out;
}

// ---------------------------------------------------------------------------
// Model file: "FSEG", u32 version, u32 mode, u32 k, u32 classes, u32 stages,
// u32 layers, u32 channels, k×f32 mean, k×f32 inv_std, u32 parameter count,
// then (name, rank, dims, f32 values) per parameter.

inline constexpr std::array<char, 4> kModelMagic{'F', 'S', 'E', 'G'};
inline constexpr std::uint32_t kModelVersion = 1;

inline std::string encode_classifier(const Classifier& m) {
  nets::detail::Writer w;
  w.raw(std::string_view(kModelMagic.data(), kModelMagic.size()));
  w.u32(kModelVersion);
  const auto& c = m.config();
  w.u32(c.mode == ClassifierMode::Temporal ? 0u : 1u);
  w.u32(static_cast<std::uint32_t>(m.dim()));
  w.u32(static_cast<std::uint32_t>(m.classes()));
  w.u32(static_cast<std::uint32_t>(c.stages));
  w.u32(static_cast<std::uint32_t>(c.layers));
  w.u32(static_cast<std::uint32_t>(c.channels));
  for (float x : m.mean()) w.scalar(x);
  for (float x : m.inv_std()) w.scalar(x);
  const auto params = m.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float x : p->value.data) w.scalar(x);
  }
  return w.bytes();
}

inline Classifier decode_classifier(std::string_view bytes) {
  nets::detail::Reader r(bytes);
  const auto magic = r.raw(4);
  if (!std::equal(kModelMagic.begin(), kModelMagic.end(), magic.begin())) throw FormatError("classifier model: bad magic");
  if (r.u32() != kModelVersion) throw FormatError("classifier model: unsupported version");
  ClassifierConfig cfg;
  const std::uint32_t mode = r.u32();
  if (mode > 1) throw FormatError("classifier model: bad mode");
  cfg.mode = mode == 0 ? ClassifierMode::Temporal : ClassifierMode::Memoryless;
  const std::size_t k = r.u32();
  const int classes = static_cast<int>(r.u32());
  cfg.stages = r.u32();
  cfg.layers = r.u32();
  cfg.channels = r.u32();
  std::vector<float> mean(k), inv_std(k);
  for (auto& x : mean) x = r.scalar<float>();
  for (auto& x : inv_std) x = r.scalar<float>();
  std::optional<Classifier> m;
  try {
    m.emplace(k, classes, cfg);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("classifier model: ") + e.what());
  }
  m->set_normalisation(std::move(mean), std::move(inv_std));
  auto params = m->mutable_parameters();
  if (r.u32() != params.size()) throw FormatError("classifier model: parameter count mismatch");
  for (auto* p : params) {
    if (r.str() != p->name) throw FormatError("classifier model: unexpected parameter '" + p->name + "'");
    if (r.u32() != p->value.rank()) throw FormatError("classifier model: rank mismatch for " + p->name);
    for (std::size_t d : p->value.shape)
      if (r.u32() != d) throw FormatError("classifier model: shape mismatch for " + p->name);
    for (auto& x : p->value.data) x = r.scalar<float>();
  }
  if (!r.done()) throw FormatError("classifier model: trailing bytes");
  return std::move(*m);
}

inline void save_classifier(const Classifier& m, const std::filesystem::path& path) {
  seqio::detail::write_file_atomic(path, encode_classifier(m));
}

inline Classifier load_classifier(const std::filesystem::path& path) {
  return decode_classifier(seqio::detail::read_file(path));
}

}  // namespace futurefeat::segeval
