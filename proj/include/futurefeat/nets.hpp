#pragma once

// Future-vector generator and the frame / sequence discriminators.
//
// A window of n feature vectors enters the generator as a k-channel signal
// of length n (convolution runs over time, channels are feature dims).

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "futurefeat/autodiff.hpp"
#include "futurefeat/errors.hpp"
#include "futurefeat/seqio.hpp"

namespace futurefeat::nets {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

inline constexpr double kInitStd = 0.02;

struct GeneratorConfig {
  std::size_t k = 16;
  std::size_t n = 20;
  std::size_t base_channels = 64;
  std::size_t trunk_channels = 256;
  std::size_t bottleneck_channels = 64;
  /// Total residual blocks; two of them form the bottleneck pair.
  std::size_t n_res_blocks = 6;
  std::uint64_t seed = 0;

  /// Width between the two downsampling convolutions.
  std::size_t mid_channels() const { return 2 * base_channels; }

  void validate() const {
    using futurefeat::detail::require;
    require(k >= 1 && n >= 1, "GeneratorConfig: k and n must be >= 1");
    require(base_channels >= 1 && bottleneck_channels >= 1, "GeneratorConfig: channel counts must be >= 1");
    require(trunk_channels > bottleneck_channels, "GeneratorConfig: trunk_channels must exceed bottleneck_channels");
    require(n_res_blocks >= 2, "GeneratorConfig: n_res_blocks must be >= 2");
  }

  bool operator==(const GeneratorConfig&) const = default;
};

struct DiscriminatorConfig {
  std::vector<std::size_t> channels{64, 128, 256, 512};
  std::size_t kernel = 4;
  double slope = 0.2;
  std::uint64_t seed = 1;

  void validate() const {
    futurefeat::detail::require(!channels.empty() && kernel >= 1, "DiscriminatorConfig: needs at least one conv");
  }
};

namespace layers {

template <std::floating_point T>
Parameter<T> normal_param(std::string name, std::vector<std::size_t> shape, std::mt19937_64& rng) {
  Parameter<T> p{std::move(name), Tensor<T>(std::move(shape))};
  std::normal_distribution<double> dist(0.0, kInitStd);
  for (auto& x : p.value.data) x = static_cast<T>(dist(rng));
  return p;
}

template <std::floating_point T>
Parameter<T> filled_param(std::string name, std::vector<std::size_t> shape, T value) {
  return Parameter<T>{std::move(name), Tensor<T>(std::move(shape), value)};
}

template <std::floating_point T>
struct Conv {
  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  Conv() = default;
  Conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride_,
       bool with_bias, std::mt19937_64& rng)
      : weight(normal_param<T>(name + ".weight", {cout, cin, kernel}, rng)), stride(stride_), pad((kernel - 1) / 2) {
    if (with_bias) bias = filled_param<T>(name + ".bias", {cout}, T{0});
  }

  std::size_t kernel() const { return weight.value.dim(2); }

  /// Symmetric (kernel-1)/2 padding.
  Var operator()(Tape<T>& tape, Var x) const {
    return run(tape, x, ad::ConvOptions{stride, pad, pad, 1});
  }

  Var run(Tape<T>& tape, Var x, ad::ConvOptions opt) const {
    Var w = tape.param(weight);
    if (bias) {
      Var b = tape.param(*bias);
      return ad::conv1d(tape, x, w, &b, opt);
    }
    return ad::conv1d(tape, x, w, nullptr, opt);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    if (bias) out.push_back(&*bias);
  }
};

template <std::floating_point T>
struct ConvTranspose {
  Parameter<T> weight;
  std::size_t stride = 2;
  std::size_t pad = 1;

  ConvTranspose() = default;
  ConvTranspose(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel, std::mt19937_64& rng)
      : weight(normal_param<T>(name + ".weight", {cin, cout, kernel}, rng)) {}

  /// Upsamples to exactly `target_len` positions.
  Var operator()(Tape<T>& tape, Var x, std::size_t target_len) const {
    const std::size_t L = tape.shape(x)[2];
    const std::size_t K = weight.value.dim(2);
    const std::size_t base = (L - 1) * stride + K - 2 * pad;
    futurefeat::detail::require(target_len >= base && target_len - base < stride,
                                "ConvTranspose: target length not reachable");
    Var w = tape.param(weight);
    return ad::conv_transpose1d(tape, x, w, nullptr, stride, pad, target_len - base);
  }

  void collect(std::vector<Parameter<T>*>& out) { out.push_back(&weight); }
};

template <std::floating_point T>
struct InstanceNorm {
  Parameter<T> gamma;
  Parameter<T> beta;

  InstanceNorm() = default;
  InstanceNorm(const std::string& name, std::size_t channels)
      : gamma(filled_param<T>(name + ".gamma", {channels}, T{1})), beta(filled_param<T>(name + ".beta", {channels}, T{0})) {}

  Var operator()(Tape<T>& tape, Var x) const {
    return ad::instance_norm(tape, x, tape.param(gamma), tape.param(beta));
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

template <std::floating_point T>
struct Linear {
  Parameter<T> weight;
  Parameter<T> bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight(normal_param<T>(name + ".weight", {out, in}, rng)), bias(filled_param<T>(name + ".bias", {out}, T{0})) {}

  Var operator()(Tape<T>& tape, Var x) const {
    Var b = tape.param(bias);
    return ad::linear(tape, x, tape.param(weight), &b);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// conv → instance norm → (optional) ReLU
template <std::floating_point T>
struct ConvNorm {
  Conv<T> conv;
  InstanceNorm<T> norm;

  ConvNorm() = default;
  ConvNorm(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride,
           std::mt19937_64& rng)
      : conv(name + ".conv", cin, cout, kernel, stride, false, rng), norm(name + ".norm", cout) {}

  Var operator()(Tape<T>& tape, Var x, bool activate = true) const {
    Var h = norm(tape, conv(tape, x));
    return activate ? ad::relu(tape, h) : h;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    conv.collect(out);
    norm.collect(out);
  }
};

/// Two kernel-3 conv+norm stages plus a skip.  The skip is a 1×1
/// projection when the channel count changes.
template <std::floating_point T>
struct ResidualBlock {
  ConvNorm<T> first;
  ConvNorm<T> second;
  std::optional<Conv<T>> projection;

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, std::size_t cin, std::size_t cout, std::mt19937_64& rng)
      : first(name + ".a", cin, cout, 3, 1, rng), second(name + ".b", cout, cout, 3, 1, rng) {
    if (cin != cout) projection.emplace(name + ".skip", cin, cout, 1, 1, true, rng);
  }

  Var operator()(Tape<T>& tape, Var x) const {
    Var h = second(tape, first(tape, x), false);
    Var skip = projection ? (*projection)(tape, x) : x;
    return ad::add(tape, skip, h);
  }

  void collect(std::vector<Parameter<T>*>& out) {
    first.collect(out);
    second.collect(out);
    if (projection) projection->collect(out);
  }
};

}  // namespace layers

/// Converts windows (n×k, rows = time) into a [B, k, n] signal.
template <std::floating_point T>
Tensor<T> windows_to_signal(std::span<const Window> batch) {
  futurefeat::detail::require(!batch.empty(), "windows_to_signal: empty batch");
  const std::size_t n = batch[0].length(), k = batch[0].dim();
  Tensor<T> out({batch.size(), k, n});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    futurefeat::detail::require(batch[b].length() == n && batch[b].dim() == k, "windows_to_signal: ragged batch");
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t c = 0; c < k; ++c)
        out.at3(b, c, t) = static_cast<T>(batch[b].vectors(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)));
  }
  return out;
}

template <std::floating_point T>
FeatureMatrix rows_to_matrix(const Tensor<T>& t) {
  FeatureMatrix out(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  for (std::size_t i = 0; i < t.size(); ++i) out.data()[i] = static_cast<float>(t[i]);
  return out;
}

template <std::floating_point T>
class Generator {
 public:
  using Scalar = T;

  explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const std::size_t mid = cfg.mid_channels();
    stem_ = layers::ConvNorm<T>("stem", cfg.k, cfg.base_channels, 7, 1, rng);
    down1_ = layers::ConvNorm<T>("down1", cfg.base_channels, mid, 3, 2, rng);
    down2_ = layers::ConvNorm<T>("down2", mid, cfg.trunk_channels, 3, 2, rng);
    const std::size_t plain = cfg.n_res_blocks - 2;
    const std::size_t before = plain / 2;
    // The squeeze/expand pair sits in the middle of the residual trunk.
    for (std::size_t i = 0; i < before; ++i)
      pre_.emplace_back("res" + std::to_string(i), cfg.trunk_channels, cfg.trunk_channels, rng);
    squeeze_ = layers::ResidualBlock<T>("bottleneck.squeeze", cfg.trunk_channels, cfg.bottleneck_channels, rng);
    expand_ = layers::ResidualBlock<T>("bottleneck.expand", cfg.bottleneck_channels, cfg.trunk_channels, rng);
    for (std::size_t i = before; i < plain; ++i)
      post_.emplace_back("res" + std::to_string(i), cfg.trunk_channels, cfg.trunk_channels, rng);
    up1_conv_ = layers::ConvTranspose<T>("up1", cfg.trunk_channels, mid, 3, rng);
    up1_norm_ = layers::InstanceNorm<T>("up1.norm", mid);
    up2_conv_ = layers::ConvTranspose<T>("up2", mid, cfg.base_channels, 3, rng);
    up2_norm_ = layers::InstanceNorm<T>("up2.norm", cfg.base_channels);
    head_ = layers::Conv<T>("head", cfg.base_channels, cfg.k, 7, 1, true, rng);
  }

  const GeneratorConfig& config() const { return cfg_; }

  /// [B, k, n] windows -> [B, k] next-vector predictions.
  Var forward(Tape<T>& tape, Var x) const {
    const auto& s = tape.shape(x);
    futurefeat::detail::require(s.size() == 3 && s[1] == cfg_.k && s[2] == cfg_.n,
                                "generator: expected input [B, " + std::to_string(cfg_.k) + ", " +
                                    std::to_string(cfg_.n) + "]");
    Var h0 = stem_(tape, x);
    const std::size_t len0 = tape.shape(h0)[2];
    Var h1 = down1_(tape, h0);
    const std::size_t len1 = tape.shape(h1)[2];
    Var h = down2_(tape, h1);
    for (const auto& b : pre_) h = b(tape, h);
    h = expand_(tape, squeeze_(tape, h));
    for (const auto& b : post_) h = b(tape, h);
    h = ad::relu(tape, up1_norm_(tape, up1_conv_(tape, h, len1)));
    h = ad::relu(tape, up2_norm_(tape, up2_conv_(tape, h, len0)));
    return ad::mean_length(tape, head_(tape, h));
  }

  /// Batched inference on windows shaped n×k.
  FeatureMatrix predict(std::span<const Window> batch) const {
    if (batch.empty()) return FeatureMatrix(0, static_cast<Eigen::Index>(cfg_.k));
    for (const auto& w : batch)
      futurefeat::detail::require(w.length() == cfg_.n && w.dim() == cfg_.k,
                                  "generator: window shape does not match config");
    Tape<T> tape(false);
    Var out = forward(tape, tape.constant(windows_to_signal<T>(batch)));
    return rows_to_matrix(tape.value(out));
  }

  std::vector<Parameter<T>*> mutable_parameters() {
    std::vector<Parameter<T>*> out;
    stem_.collect(out);
    down1_.collect(out);
    down2_.collect(out);
    for (auto& b : pre_) b.collect(out);
    squeeze_.collect(out);
    expand_.collect(out);
    for (auto& b : post_) b.collect(out);
    up1_conv_.collect(out);
    up1_norm_.collect(out);
    up2_conv_.collect(out);
    up2_norm_.collect(out);
    head_.collect(out);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    auto raw = const_cast<Generator*>(this)->mutable_parameters();
    return {raw.begin(), raw.end()};
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto* p : parameters()) total += p->value.size();
    return total;
  }

 private:
  GeneratorConfig cfg_;
  layers::ConvNorm<T> stem_, down1_, down2_;
  std::vector<layers::ResidualBlock<T>> pre_, post_;
  layers::ResidualBlock<T> squeeze_, expand_;
  layers::ConvTranspose<T> up1_conv_, up2_conv_;
  layers::InstanceNorm<T> up1_norm_, up2_norm_;
  layers::Conv<T> head_;
};

/// Strided conv stack with leaky ReLU ending in a single linear score.
template <std::floating_point T>
class ConvDiscriminator {
 public:
  using Scalar = T;

  ConvDiscriminator(std::string name, std::size_t in_channels, std::size_t in_length, const DiscriminatorConfig& cfg)
      : cfg_(cfg), in_channels_(in_channels), in_length_(in_length) {
    cfg.validate();
    futurefeat::detail::require(in_channels >= 1 && in_length >= 1, "discriminator: empty input shape");
    std::mt19937_64 rng(cfg.seed);
    std::size_t c = in_channels, len = in_length;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      convs_.emplace_back(name + ".conv" + std::to_string(i), c, cfg.channels[i], cfg.kernel, 2, true, rng);
      c = cfg.channels[i];
      len = (len + 1) / 2;
    }
    head_ = layers::Linear<T>(name + ".head", c * len, 1, rng);
  }

  std::size_t input_channels() const { return in_channels_; }
  std::size_t input_length() const { return in_length_; }

  /// [B, C, L] -> [B, 1]
  Var forward_signal(Tape<T>& tape, Var x) const {
    const auto& s = tape.shape(x);
    futurefeat::detail::require(s.size() == 3 && s[1] == in_channels_ && s[2] == in_length_,
                                "discriminator: input shape mismatch");
    Var h = x;
    for (const auto& conv : convs_) {
      const std::size_t len = tape.shape(h)[2];
      h = ad::leaky_relu(tape, conv.run(tape, h, ad::same_padding(len, conv.kernel(), 2)), static_cast<T>(cfg_.slope));
    }
    const auto& hs = tape.shape(h);
    h = ad::reshape(tape, h, {hs[0], hs[1] * hs[2]});
    return head_(tape, h);
  }

  std::vector<Parameter<T>*> mutable_parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& c : convs_) c.collect(out);
    head_.collect(out);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    auto raw = const_cast<ConvDiscriminator*>(this)->mutable_parameters();
    return {raw.begin(), raw.end()};
  }

 private:
  DiscriminatorConfig cfg_;
  std::size_t in_channels_, in_length_;
  std::vector<layers::Conv<T>> convs_;
  layers::Linear<T> head_;
};

/// Scores single feature vectors: the k-vector is read as a 1-channel
/// signal of length k.
template <std::floating_point T>
class FrameDiscriminator {
 public:
  using Scalar = T;

  FrameDiscriminator(std::size_t k, const DiscriminatorConfig& cfg = {}) : k_(k), net_("dframe", 1, k, cfg) {}

  /// [B, k] -> [B, 1]
  Var forward(Tape<T>& tape, Var v) const {
    const auto& s = tape.shape(v);
    futurefeat::detail::require(s.size() == 2 && s[1] == k_, "frame discriminator: expected [B, k] input");
    return net_.forward_signal(tape, ad::reshape(tape, v, {s[0], 1, k_}));
  }

  template <class Vec>
  double score(const Vec& v) const {
    futurefeat::detail::require(static_cast<std::size_t>(v.size()) == k_, "frame discriminator: dimension mismatch");
    Tape<T> tape(false);
    Tensor<T> x({1, k_});
    for (std::size_t i = 0; i < k_; ++i) x[i] = static_cast<T>(v[static_cast<Eigen::Index>(i)]);
    return static_cast<double>(tape.value(forward(tape, tape.constant(std::move(x))))[0]);
  }

  std::vector<Parameter<T>*> mutable_parameters() { return net_.mutable_parameters(); }
  std::vector<const Parameter<T>*> parameters() const { return net_.parameters(); }

 private:
  std::size_t k_;
  ConvDiscriminator<T> net_;
};

/// Scores runs of n+1 consecutive vectors as a k-channel signal.
template <std::floating_point T>
class SequenceDiscriminator {
 public:
  using Scalar = T;

  SequenceDiscriminator(std::size_t k, std::size_t n, const DiscriminatorConfig& cfg = {})
      : k_(k), len_(n + 1), net_("dseq", k, n + 1, cfg) {}

  /// [B, k, n+1] -> [B, 1]
  Var forward(Tape<T>& tape, Var x) const { return net_.forward_signal(tape, x); }

  /// `rows` is (n+1)×k, time-major.
  double score(const FeatureMatrix& rows) const {
    futurefeat::detail::require(static_cast<std::size_t>(rows.rows()) == len_ && static_cast<std::size_t>(rows.cols()) == k_,
                                "sequence discriminator: expected (n+1)×k input");
    Window w{rows, "", 0};
    Tape<T> tape(false);
    Var out = forward(tape, tape.constant(windows_to_signal<T>(std::span<const Window>(&w, 1))));
    return static_cast<double>(tape.value(out)[0]);
  }

  std::vector<Parameter<T>*> mutable_parameters() { return net_.mutable_parameters(); }
  std::vector<const Parameter<T>*> parameters() const { return net_.parameters(); }

 private:
  std::size_t k_, len_;
  ConvDiscriminator<T> net_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// Little-endian layout: "FGCK", u32 version, u32 scalar bytes, six u32
// GeneratorConfig sizes, u64 init seed, u32 epoch, u64 run seed, u32 metadata
// count then (u32 len, key bytes, f64 value) entries, u32 parameter count
// then (u32 len, name, u32 rank, u32 dims..., raw scalars) entries.

inline constexpr std::array<char, 4> kCheckpointMagic{'F', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint32_t epoch = 0;
  std::uint64_t run_seed = 0;
  /// Training hyperparameters recorded alongside the weights.
  std::map<std::string, double> metadata;
};

namespace detail {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  template <std::floating_point T>
  void scalar(T v) {
    if constexpr (sizeof(T) == 4) u32(std::bit_cast<std::uint32_t>(v));
    else u64(std::bit_cast<std::uint64_t>(v));
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view buf) : buf_(buf) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::uint64_t u64() { return take(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(buf_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <std::floating_point T>
  T scalar() {
    if constexpr (sizeof(T) == 4) return std::bit_cast<T>(u32());
    else return std::bit_cast<T>(u64());
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("checkpoint: truncated");
  }
  std::uint64_t take(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  std::string_view buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <std::floating_point T>
std::string encode_checkpoint(const Generator<T>& gen, const CheckpointInfo& info) {
  detail::Writer w;
  w.raw(std::string_view(kCheckpointMagic.data(), kCheckpointMagic.size()));
  w.u32(kCheckpointVersion);
  w.u32(sizeof(T));
  const auto& c = gen.config();
  for (std::size_t v : {c.k, c.n, c.base_channels, c.trunk_channels, c.bottleneck_channels, c.n_res_blocks})
    w.u32(static_cast<std::uint32_t>(v));
  w.u64(c.seed);
  w.u32(info.epoch);
  w.u64(info.run_seed);
  w.u32(static_cast<std::uint32_t>(info.metadata.size()));
  for (const auto& [key, value] : info.metadata) {
    w.str(key);
    w.f64(value);
  }
  const auto params = gen.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape) w.u32(static_cast<std::uint32_t>(d));
    for (T x : p->value.data) w.scalar(x);
  }
  return w.bytes();
}

template <std::floating_point T>
struct LoadedCheckpoint {
  Generator<T> generator;
  CheckpointInfo info;
};

template <std::floating_point T>
LoadedCheckpoint<T> decode_checkpoint(std::string_view bytes) {
  detail::Reader r(bytes);
  const auto magic = r.raw(4);
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), magic.begin()))
    throw FormatError("checkpoint: bad magic");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  if (r.u32() != sizeof(T)) throw FormatError("checkpoint: scalar width mismatch");
  GeneratorConfig cfg;
  cfg.k = r.u32();
  cfg.n = r.u32();
  cfg.base_channels = r.u32();
  cfg.trunk_channels = r.u32();
  cfg.bottleneck_channels = r.u32();
  cfg.n_res_blocks = r.u32();
  cfg.seed = r.u64();
  CheckpointInfo info;
  info.epoch = r.u32();
  info.run_seed = r.u64();
  const std::uint32_t meta = r.u32();
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string key = r.str();
    info.metadata[key] = r.f64();
  }
  Generator<T> gen = [&] {
    try {
      return Generator<T>(cfg);
    } catch (const ValidationError& e) {
      throw FormatError(std::string("checkpoint: invalid generator config: ") + e.what());
    }
  }();
  auto params = gen.mutable_parameters();
  if (r.u32() != params.size()) throw FormatError("checkpoint: parameter count mismatch");
  for (auto* p : params) {
    if (r.str() != p->name) throw FormatError("checkpoint: unexpected parameter '" + p->name + "'");
    const std::uint32_t rank = r.u32();
    if (rank != p->value.rank()) throw FormatError("checkpoint: rank mismatch for " + p->name);
    for (std::size_t d : p->value.shape)
      if (r.u32() != d) throw FormatError("checkpoint: shape mismatch for " + p->name);
    for (auto& x : p->value.data) x = r.template scalar<T>();
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return LoadedCheckpoint<T>{std::move(gen), std::move(info)};
}

template <std::floating_point T>
void save_checkpoint(const Generator<T>& gen, const CheckpointInfo& info, const std::filesystem::path& path) {
  seqio::detail::write_file_atomic(path, encode_checkpoint(gen, info));
}

template <std::floating_point T = float>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(seqio::detail::read_file(path));
}

}  // namespace futurefeat::nets
