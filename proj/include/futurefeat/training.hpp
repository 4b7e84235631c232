#pragma once

// Retrospective cycle training of the future-vector generator.
//
// Per batch item with window V[m, m+n), successor v[m+n] and true future
// V[m+n, m+n+l):
//   forward     v̂[m+n] = G(V[m, m+n))
//   backward    v̂[m]   = G(reverse V[m+1, m+n])
//   re-forward  v̂̂[m+n] = G(V[m, m+n) with v̂[m] in place of v[m])
//   re-backward v̂̂[m]   = G(reverse V[m+1, m+n] with v̂[m+n] in place of v[m+n])
//   rollout     l iterated predictions starting from v̂[m+n]
// The generator loss is
//   λ_adv·(adv_frame + adv_seq) + λ_recon·recon + λ_log·log_recon + λ_seq·seq
// with least-squares adversarial terms.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "futurefeat/autodiff.hpp"
#include "futurefeat/errors.hpp"
#include "futurefeat/nets.hpp"
#include "futurefeat/optim.hpp"
#include "futurefeat/selection.hpp"
#include "futurefeat/seqio.hpp"
#include "futurefeat/simmetrics.hpp"

namespace futurefeat::training {

using ad::Gradients;
using ad::Tape;
using ad::Tensor;
using ad::Var;

struct LossConfig {
  double lambda_seq = 0.003;
  double lambda_recon = 1.0;
  double lambda_log = 1.0;
  double lambda_adv = 0.003;
  std::size_t l_rollout = 10;
  double log_sigma = 1.5;
  std::size_t log_kernel = 9;

  void validate() const {
    using futurefeat::detail::require;
    require(lambda_seq >= 0 && lambda_recon >= 0 && lambda_log >= 0 && lambda_adv >= 0,
            "LossConfig: loss weights must be >= 0");
    require(l_rollout >= 1, "LossConfig: l_rollout must be >= 1");
    require(log_sigma > 0, "LossConfig: log_sigma must be positive");
    require(log_kernel % 2 == 1, "LossConfig: log_kernel must be odd");
  }

  std::map<std::string, double> as_metadata() const {
    return {{"lambda_seq", lambda_seq}, {"lambda_recon", lambda_recon},
            {"lambda_log", lambda_log}, {"lambda_adv", lambda_adv},
            {"l_rollout", static_cast<double>(l_rollout)}, {"log_sigma", log_sigma},
            {"log_kernel", static_cast<double>(log_kernel)}};
  }
};

struct LossBreakdown {
  double adv_frame = 0.0;
  double adv_seq = 0.0;
  double recon = 0.0;
  double log_recon = 0.0;
  double seq = 0.0;
  double total = 0.0;

  double weighted_total(const LossConfig& c) const {
    return c.lambda_adv * (adv_frame + adv_seq) + c.lambda_recon * recon + c.lambda_log * log_recon +
           c.lambda_seq * seq;
  }

  LossBreakdown& operator+=(const LossBreakdown& o) {
    adv_frame += o.adv_frame;
    adv_seq += o.adv_seq;
    recon += o.recon;
    log_recon += o.log_recon;
    seq += o.seq;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double s) const {
    return {adv_frame * s, adv_seq * s, recon * s, log_recon * s, seq * s, total * s};
  }
};

struct TrainConfig {
  double lr = 0.00003;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  std::size_t n = 20;
  std::uint64_t seed = 0;
  bool pool_test_into_train = false;
  /// Generator/discriminator update pairs per epoch; 0 means one pass worth
  /// of windows, ceil(eligible windows / batch_size).
  std::size_t steps_per_epoch = 0;
  simmetrics::PsnrVariant psnr = simmetrics::PsnrVariant::Paper;

  void validate() const {
    using futurefeat::detail::require;
    require(lr > 0, "TrainConfig: lr must be positive");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "TrainConfig: betas must lie in [0, 1)");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    require(n >= 2, "TrainConfig: window length n must be >= 2");
  }
};

// ---------------------------------------------------------------------------
// Laplacian of Gaussian

/// g''(x) ∝ (x² − σ²)/σ⁴ · exp(−x²/2σ²) sampled at integer offsets and
/// shifted to zero sum.
inline Eigen::VectorXd log_kernel(double sigma, std::size_t ksize) {
  futurefeat::detail::require(sigma > 0.0, "log_kernel: sigma must be positive");
  futurefeat::detail::require(ksize >= 1 && ksize % 2 == 1, "log_kernel: ksize must be odd");
  const auto r = static_cast<std::ptrdiff_t>(ksize / 2);
  Eigen::VectorXd g(static_cast<Eigen::Index>(ksize));
  const double s2 = sigma * sigma;
  for (std::ptrdiff_t i = -r; i <= r; ++i) {
    const double x = static_cast<double>(i);
    g[i + r] = (x * x - s2) / (s2 * s2) * std::exp(-x * x / (2.0 * s2));
  }
  g.array() -= g.mean();
  return g;
}

/// Half-sample symmetric reflection: (d c b a | a b c d | d c b a).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t len) {
  const auto n = static_cast<std::ptrdiff_t>(len);
  const std::ptrdiff_t period = 2 * n;
  std::ptrdiff_t j = i % period;
  if (j < 0) j += period;
  return static_cast<std::size_t>(j < n ? j : period - 1 - j);
}

/// The LoG filter as a k×k linear operator: y = M·v.
inline Eigen::MatrixXd log_operator(std::size_t k, double sigma, std::size_t ksize) {
  futurefeat::detail::require(ksize <= k, "log_filter: ksize must not exceed the vector length");
  const Eigen::VectorXd g = log_kernel(sigma, ksize);
  const auto r = static_cast<std::ptrdiff_t>(ksize / 2);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i)
    for (std::ptrdiff_t j = -r; j <= r; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(reflect_index(static_cast<std::ptrdiff_t>(i) + j, k))) +=
          g[j + r];
  return m;
}

template <class Vec>
Eigen::VectorXd log_filter(const Vec& v, double sigma, std::size_t ksize) {
  const auto k = static_cast<std::size_t>(v.size());
  Eigen::VectorXd x(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) x[i] = static_cast<double>(v[i]);
  return log_operator(k, sigma, ksize) * x;
}

// ---------------------------------------------------------------------------
// Models usable on a tape

template <class M, class T>
concept TapeModel = requires(const M& m, Tape<T>& tape, Var x) {
  { m.forward(tape, x) } -> std::same_as<Var>;
  { m.parameters() } -> std::convertible_to<std::vector<const ad::Parameter<T>*>>;
};

template <std::floating_point T>
using Mat = ad::RowMat<T>;

/// One training example; every field uses time-major rows.
template <std::floating_point T>
struct CycleItem {
  Mat<T> window;  ///< n×k, V[m, m+n)
  Mat<T> next;    ///< 1×k, v[m+n]
  Mat<T> future;  ///< l×k, V[m+n, m+n+l)
};

/// Builds the item starting at frame m of `seq`; needs m + n + l <= T.
template <std::floating_point T>
CycleItem<T> make_item(const FeatureSequence& seq, std::size_t m, std::size_t n, std::size_t l) {
  futurefeat::detail::require(m + n + l <= seq.length(), "make_item: window too close to the sequence end");
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), L = static_cast<Eigen::Index>(l);
  return CycleItem<T>{seq.frames.middleRows(M, N).template cast<T>(), seq.frames.row(M + N).template cast<T>(),
                      seq.frames.middleRows(M + N, L).template cast<T>()};
}

namespace detail {

/// Rows [first, first+count) of each item's matrix, as a [B, k, count] signal.
template <std::floating_point T, class Get>
Tensor<T> stack_rows(std::span<const CycleItem<T>> batch, Get get, std::size_t first, std::size_t count) {
  const std::size_t k = static_cast<std::size_t>(batch[0].window.cols());
  Tensor<T> out({batch.size(), k, count});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Mat<T>& m = get(batch[b]);
    for (std::size_t t = 0; t < count; ++t)
      for (std::size_t c = 0; c < k; ++c)
        out.at3(b, c, t) = m(static_cast<Eigen::Index>(first + t), static_cast<Eigen::Index>(c));
  }
  return out;
}

template <std::floating_point T>
Var as_step(Tape<T>& tape, Var v) {
  const auto& s = tape.shape(v);
  return ad::reshape(tape, v, {s[0], s[1], 1});
}

template <std::floating_point T>
Var as_vector(Tape<T>& tape, Var v) {
  const auto& s = tape.shape(v);
  return ad::reshape(tape, v, {s[0], s[1] * s[2]});
}

template <std::floating_point T>
Var replicate_batch(Tape<T>& tape, Var v, std::size_t times) {
  return ad::concat_batch(tape, std::vector<Var>(times, v));
}

/// Mean of several equally-sized scalar losses.
template <std::floating_point T>
Var mean_of(Tape<T>& tape, const std::vector<Var>& parts) {
  Var acc = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) acc = ad::add(tape, acc, parts[i]);
  return ad::scale(tape, acc, T{1} / static_cast<T>(parts.size()));
}

}  // namespace detail

template <std::floating_point T>
struct CycleResult {
  LossBreakdown losses;
  /// Gradients of the total with respect to generator parameters only.
  Gradients<T> grads;
  /// Detached samples for the discriminator update, equal counts per pair.
  Tensor<T> real_frames, fake_frames;  ///< [4B, k]
  Tensor<T> real_seqs, fake_seqs;      ///< [4B, k, n+1]
};

/// Generator-side losses and gradients for one batch.  Discriminator
/// parameters are read as constants.
template <std::floating_point T, TapeModel<T> Gen, TapeModel<T> DFrame, TapeModel<T> DSeq>
CycleResult<T> cycle_step(const Gen& gen, const DFrame& d_frame, const DSeq& d_seq,
                          std::span<const CycleItem<T>> batch, const LossConfig& cfg) {
  cfg.validate();
  futurefeat::detail::require(!batch.empty(), "cycle_step: empty batch");
  const std::size_t B = batch.size();
  const std::size_t n = static_cast<std::size_t>(batch[0].window.rows());
  const std::size_t k = static_cast<std::size_t>(batch[0].window.cols());
  const std::size_t l = cfg.l_rollout;
  for (const auto& it : batch) {
    futurefeat::detail::require(static_cast<std::size_t>(it.window.rows()) == n && static_cast<std::size_t>(it.window.cols()) == k &&
                                    it.next.rows() == 1 && static_cast<std::size_t>(it.next.cols()) == k,
                                "cycle_step: ragged batch");
    // Items must be sampled where the full rollout target exists.
    futurefeat::detail::require(static_cast<std::size_t>(it.future.rows()) == l && static_cast<std::size_t>(it.future.cols()) == k,
                                "cycle_step: item lacks an l_rollout-step future (sampling logic error)");
  }

  Tape<T> tape;
  {
    auto fp = d_frame.parameters();
    auto sp = d_seq.parameters();
    tape.freeze(fp);
    tape.freeze(sp);
  }
  using Item = CycleItem<T>;
  auto win = [](const Item& i) -> const Mat<T>& { return i.window; };
  auto nxt = [](const Item& i) -> const Mat<T>& { return i.next; };
  auto fut = [](const Item& i) -> const Mat<T>& { return i.future; };

  const Var window = tape.constant(detail::stack_rows<T>(batch, win, 0, n));          // v[m .. m+n-1]
  const Var next_sig = tape.constant(detail::stack_rows<T>(batch, nxt, 0, 1));        // v[m+n]
  const Var next = detail::as_vector(tape, next_sig);
  const Var first = detail::as_vector(tape, ad::slice_length(tape, window, 0, 1));    // v[m]
  const Var tail = ad::slice_length(tape, window, 1, n - 1);                          // v[m+1 .. m+n-1]
  const Var reversed = ad::reverse_length(tape, ad::concat_length(tape, {tail, next_sig}));  // v[m+n .. m+1]

  const Var out1 = gen.forward(tape, ad::concat_batch(tape, {window, reversed}));
  const Var fwd = ad::slice_batch(tape, out1, 0, B);  // v̂[m+n]
  const Var bwd = ad::slice_batch(tape, out1, B, B);  // v̂[m]

  const Var subst_fwd = ad::concat_length(tape, {detail::as_step(tape, bwd), tail});
  const Var subst_bwd = ad::concat_length(tape, {detail::as_step(tape, fwd), ad::slice_length(tape, reversed, 1, n - 1)});
  const Var out2 = gen.forward(tape, ad::concat_batch(tape, {subst_fwd, subst_bwd}));
  const Var refwd = ad::slice_batch(tape, out2, 0, B);  // v̂̂[m+n]
  const Var rebwd = ad::slice_batch(tape, out2, B, B);  // v̂̂[m]

  std::vector<Var> rollout{fwd};
  Var cur = window;
  for (std::size_t j = 1; j < l; ++j) {
    cur = ad::concat_length(tape, {ad::slice_length(tape, cur, 1, n - 1), detail::as_step(tape, rollout.back())});
    rollout.push_back(gen.forward(tape, cur));
  }
  const Var future_sig = tape.constant(detail::stack_rows<T>(batch, fut, 0, l));
  std::vector<Var> seq_terms;
  for (std::size_t j = 0; j < l; ++j)
    seq_terms.push_back(ad::mse(tape, rollout[j], detail::as_vector(tape, ad::slice_length(tape, future_sig, j, 1))));
  const Var seq_loss = detail::mean_of(tape, seq_terms);

  const Var recon = detail::mean_of(tape, {ad::mse(tape, fwd, next), ad::mse(tape, bwd, first),
                                           ad::mse(tape, refwd, next), ad::mse(tape, rebwd, first)});
  ad::RowMat<T> log_m = log_operator(k, cfg.log_sigma, cfg.log_kernel).template cast<T>();
  auto logf = [&](Var v) { return ad::apply_fixed(tape, v, log_m); };
  const Var log_next = logf(next), log_first = logf(first);
  const Var log_recon = detail::mean_of(tape, {ad::mse(tape, logf(fwd), log_next), ad::mse(tape, logf(bwd), log_first),
                                               ad::mse(tape, logf(refwd), log_next), ad::mse(tape, logf(rebwd), log_first)});

  const Var fake_frames = ad::concat_batch(tape, {fwd, bwd, refwd, rebwd});
  const Var adv_frame = ad::mse_to(tape, d_frame.forward(tape, fake_frames), T{1});
  const Var fake_seqs = ad::concat_batch(
      tape, {ad::concat_length(tape, {window, detail::as_step(tape, fwd)}),
             ad::concat_length(tape, {window, detail::as_step(tape, refwd)}),
             ad::concat_length(tape, {detail::as_step(tape, bwd), tail, next_sig}),
             ad::concat_length(tape, {detail::as_step(tape, rebwd), tail, next_sig})});
  const Var adv_seq = ad::mse_to(tape, d_seq.forward(tape, fake_seqs), T{1});

  const T la = static_cast<T>(cfg.lambda_adv);
  Var total = ad::sum(tape, adv_frame, adv_seq, la, la);
  total = ad::sum(tape, total, recon, T{1}, static_cast<T>(cfg.lambda_recon));
  total = ad::sum(tape, total, log_recon, T{1}, static_cast<T>(cfg.lambda_log));
  total = ad::sum(tape, total, seq_loss, T{1}, static_cast<T>(cfg.lambda_seq));

  CycleResult<T> res;
  auto scalar = [&](Var v) { return static_cast<double>(tape.value(v)[0]); };
  res.losses = LossBreakdown{scalar(adv_frame), scalar(adv_seq), scalar(recon), scalar(log_recon), scalar(seq_loss), scalar(total)};
  res.fake_frames = tape.value(fake_frames);
  res.fake_seqs = tape.value(fake_seqs);
  res.real_frames = tape.value(detail::replicate_batch(tape, ad::concat_batch(tape, {next, first}), 2));
  res.real_seqs = tape.value(detail::replicate_batch(tape, ad::concat_length(tape, {window, next_sig}), 4));
  res.grads = tape.backward(total);
  return res;
}

struct DiscriminatorLosses {
  double frame = 0.0;
  double seq = 0.0;
};

template <std::floating_point T>
struct DiscriminatorResult {
  DiscriminatorLosses losses;
  Gradients<T> grads;
};

/// Least-squares discriminator losses E[(D(real)−1)²] + E[D(fake)²] for both
/// discriminators.  Inputs are plain tensors, so fakes carry no generator
/// gradient.
template <std::floating_point T, TapeModel<T> DFrame, TapeModel<T> DSeq>
DiscriminatorResult<T> discriminator_step(const DFrame& d_frame, const DSeq& d_seq, const Tensor<T>& real_frames,
                                          const Tensor<T>& fake_frames, const Tensor<T>& real_seqs,
                                          const Tensor<T>& fake_seqs) {
  using futurefeat::detail::require;
  require(real_frames.size() > 0 && real_seqs.size() > 0, "discriminator_step: empty batch");
  require(real_frames.shape == fake_frames.shape, "discriminator_step: real/fake frame counts differ");
  require(real_seqs.shape == fake_seqs.shape, "discriminator_step: real/fake sequence counts differ");
  Tape<T> tape;
  const Var f_loss = ad::add(tape, ad::mse_to(tape, d_frame.forward(tape, tape.constant(real_frames)), T{1}),
                             ad::mse_to(tape, d_frame.forward(tape, tape.constant(fake_frames)), T{0}));
  const Var s_loss = ad::add(tape, ad::mse_to(tape, d_seq.forward(tape, tape.constant(real_seqs)), T{1}),
                             ad::mse_to(tape, d_seq.forward(tape, tape.constant(fake_seqs)), T{0}));
  DiscriminatorResult<T> out;
  out.losses = {static_cast<double>(tape.value(f_loss)[0]), static_cast<double>(tape.value(s_loss)[0])};
  out.grads = tape.backward(ad::add(tape, f_loss, s_loss));
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLosses {
  LossBreakdown generator;  ///< mean over the epoch's steps
  DiscriminatorLosses discriminator;
};

struct TrainOptions {
  /// Widths of the generator; k and n are filled in from the data and TrainConfig.
  nets::GeneratorConfig generator;
  nets::DiscriminatorConfig discriminator;
  /// Where per-epoch checkpoints go (created if missing).  Required.
  std::filesystem::path checkpoint_dir;
  /// Receives the per-epoch log lines.
  std::ostream* log = nullptr;
};

struct TrainingRun {
  std::vector<selection::EpochRecord> records;
  std::vector<EpochLosses> losses;
  std::vector<std::filesystem::path> checkpoints;
  TrainConfig train_config;
  LossConfig loss_config;
  nets::GeneratorConfig generator_config;
  std::optional<nets::Generator<float>> final_generator;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch) {
  std::ostringstream name;
  name << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".fgck";
  return dir / name.str();
}

inline std::string log_line(int epoch, const char* split, const simmetrics::MetricTriple& m, double total_loss) {
  std::ostringstream out;
  out << "epoch=" << epoch << " split=" << split << " mse=" << selection::format_double(m.mse)
      << " psnr=" << selection::format_double(m.psnr) << " ssim=" << selection::format_double(m.ssim)
      << " total_loss=" << selection::format_double(total_loss);
  return out.str();
}

/// (sequence, start) pairs with a full rollout target: m + n + l <= T.
inline std::vector<std::pair<const FeatureSequence*, std::size_t>> eligible_starts(
    const std::vector<const FeatureSequence*>& pool, std::size_t n, std::size_t l) {
  std::vector<std::pair<const FeatureSequence*, std::size_t>> out;
  for (const auto* s : pool)
    for (std::size_t m = 0; m + n + l <= s->length(); ++m) out.emplace_back(s, m);
  return out;
}

inline TrainingRun train(const DatasetSplit& split_in, const TrainConfig& tcfg, const LossConfig& lcfg,
                         const Scaler& scaler, const TrainOptions& opts) {
  using futurefeat::detail::require;
  tcfg.validate();
  lcfg.validate();
  split_in.validate();
  require(!split_in.train.empty(), "train: no training sequences");
  require(!opts.checkpoint_dir.empty(), "train: checkpoint_dir is required");
  DatasetSplit split = split_in;
  split.pool_test_into_train = tcfg.pool_test_into_train;
  const std::size_t n = tcfg.n, l = lcfg.l_rollout, k = split.dim();
  for (const auto& s : split.train)
    require(s.length() >= n + l, "train: sequence '" + s.id + "' is shorter than n + l_rollout = " +
                                     std::to_string(n + l));
  for (const auto& s : split.test)
    require(s.length() >= n + 1, "train: test sequence '" + s.id + "' is shorter than n + 1");
  require(k >= lcfg.log_kernel, "train: feature dimension " + std::to_string(k) + " is smaller than log_kernel");

  const auto starts = eligible_starts(split.training_pool(), n, l);
  require(!starts.empty(), "train: no eligible training windows");
  const std::size_t steps = tcfg.steps_per_epoch > 0 ? tcfg.steps_per_epoch
                                                      : (starts.size() + tcfg.batch_size - 1) / tcfg.batch_size;

  std::error_code ec;
  std::filesystem::create_directories(opts.checkpoint_dir, ec);
  if (!std::filesystem::is_directory(opts.checkpoint_dir))
    throw IoError("cannot create checkpoint directory: " + opts.checkpoint_dir.string());

  TrainingRun run;
  run.train_config = tcfg;
  run.loss_config = lcfg;
  run.generator_config = opts.generator;
  run.generator_config.k = k;
  run.generator_config.n = n;

  nets::Generator<float> gen(run.generator_config);
  nets::FrameDiscriminator<float> d_frame(k, opts.discriminator);
  nets::SequenceDiscriminator<float> d_seq(k, n, opts.discriminator);
  const optim::AdamConfig adam{tcfg.lr, tcfg.beta1, tcfg.beta2};
  optim::Adam<float> opt_g(adam), opt_f(adam), opt_s(adam);
  const auto gen_params = gen.mutable_parameters();
  const auto frame_params = d_frame.mutable_parameters();
  const auto seq_params = d_seq.mutable_parameters();

  std::mt19937_64 rng(tcfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
  nets::CheckpointInfo info;
  info.run_seed = tcfg.seed;
  info.metadata = lcfg.as_metadata();
  info.metadata["lr"] = tcfg.lr;
  info.metadata["beta1"] = tcfg.beta1;
  info.metadata["beta2"] = tcfg.beta2;
  info.metadata["pool_test_into_train"] = tcfg.pool_test_into_train ? 1.0 : 0.0;

  std::vector<CycleItem<float>> batch;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    EpochLosses acc;
    for (std::size_t step = 0; step < steps; ++step) {
      batch.clear();
      for (std::size_t b = 0; b < tcfg.batch_size; ++b) {
        const auto& [seq, m] = starts[pick(rng)];
        batch.push_back(make_item<float>(*seq, m, n, l));
      }
      auto g = cycle_step<float>(gen, d_frame, d_seq, std::span<const CycleItem<float>>(batch), lcfg);
      opt_g.step(gen_params, g.grads);
      auto d = discriminator_step<float>(d_frame, d_seq, g.real_frames, g.fake_frames, g.real_seqs, g.fake_seqs);
      Gradients<float>& dg = d.grads;
      opt_f.step(frame_params, dg);
      opt_s.step(seq_params, dg);
      acc.generator += g.losses;
      acc.discriminator.frame += d.losses.frame;
      acc.discriminator.seq += d.losses.seq;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    acc.generator = acc.generator.scaled(inv);
    acc.discriminator.frame *= inv;
    acc.discriminator.seq *= inv;

    selection::EpochRecord rec;
    rec.epoch = static_cast<int>(epoch);
    rec.train = simmetrics::evaluate_generator(gen, split.train, n, scaler, tcfg.psnr);
    if (!split.test.empty()) rec.test = simmetrics::evaluate_generator(gen, split.test, n, scaler, tcfg.psnr);

    info.epoch = static_cast<std::uint32_t>(epoch);
    const auto path = checkpoint_path(opts.checkpoint_dir, rec.epoch);
    nets::save_checkpoint(gen, info, path);
    run.checkpoints.push_back(path);
    if (opts.log) {
      *opts.log << log_line(rec.epoch, "train", rec.train, acc.generator.total) << '\n';
      if (rec.test) *opts.log << log_line(rec.epoch, "test", *rec.test, acc.generator.total) << '\n';
      opts.log->flush();
    }
    run.records.push_back(rec);
    run.losses.push_back(acc);
  }
  run.final_generator.emplace(std::move(gen));
  return run;
}

}  // namespace futurefeat::training
