#pragma once

// Feature-sequence data model, the FSEQ binary format, windowing, value
// scaling and synthetic datasets.
//
// FSEQ layout (all little-endian):
//   bytes 0-3   "FSEQ"
//   bytes 4-7   u32 version (1)
//   bytes 8-11  u32 T (frames)
//   bytes 12-15 u32 k (feature dimension)
//   then T*k IEEE-754 binary32 values, frame-major.  No padding, no trailer.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "futurefeat/errors.hpp"
#include "futurefeat/labels.hpp"

namespace futurefeat {

/// Rows are frames, columns are feature dimensions.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FeatureVector = Eigen::Matrix<float, 1, Eigen::Dynamic>;

struct FeatureSequence {
  std::string id;
  FeatureMatrix frames;
  std::optional<double> fps;
  /// File the sequence was loaded from, if any.  Not serialised.
  std::filesystem::path source;

  std::size_t length() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(frames.cols()); }

  void validate() const {
    futurefeat::detail::require(frames.rows() >= 1, "sequence '" + id + "': needs at least one frame");
    futurefeat::detail::require(frames.cols() >= 1, "sequence '" + id + "': feature dimension must be >= 1");
    futurefeat::detail::require(frames.allFinite(), "sequence '" + id + "': contains non-finite values");
    if (fps) futurefeat::detail::require(*fps > 0.0, "sequence '" + id + "': fps must be positive");
  }
};

/// n consecutive feature vectors and where they came from.  `start` may be
/// negative for left-padded windows built during encoding.
struct Window {
  FeatureMatrix vectors;
  std::string sequence_id;
  std::ptrdiff_t start = 0;

  std::size_t length() const { return static_cast<std::size_t>(vectors.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
};

/// Dataset-global affine map onto [0, 255].
struct Scaler {
  double lo = 0.0;
  double hi = 255.0;

  static constexpr double kRange = 255.0;

  double apply(double x) const { return std::clamp((x - lo) / (hi - lo) * kRange, 0.0, kRange); }

  template <class Vec>
  Eigen::VectorXd apply_all(const Vec& v) const {
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = apply(static_cast<double>(v[i]));
    return out;
  }
};

struct DatasetSplit {
  std::vector<FeatureSequence> train;
  std::vector<FeatureSequence> test;
  bool pool_test_into_train = false;

  std::size_t dim() const {
    if (!train.empty()) return train.front().dim();
    return test.empty() ? 0 : test.front().dim();
  }

  void validate() const {
    std::set<std::string> ids;
    const std::size_t k = dim();
    for (const auto* part : {&train, &test})
      for (const auto& s : *part) {
        s.validate();
        futurefeat::detail::require(ids.insert(s.id).second, "duplicate sequence id '" + s.id + "' in split");
        futurefeat::detail::require(s.dim() == k, "sequence '" + s.id + "' has dimension " + std::to_string(s.dim()) +
                                          ", expected " + std::to_string(k));
      }
  }

  /// Sequences windows are drawn from during generator training.
  std::vector<const FeatureSequence*> training_pool() const {
    std::vector<const FeatureSequence*> out;
    for (const auto& s : train) out.push_back(&s);
    if (pool_test_into_train)
      for (const auto& s : test) out.push_back(&s);
    return out;
  }
};

namespace seqio {

inline constexpr std::array<char, 4> kFseqMagic{'F', 'S', 'E', 'Q'};
inline constexpr std::uint32_t kFseqVersion = 1;
inline constexpr std::size_t kFseqHeaderBytes = 16;

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(std::string_view buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading file: " + path.string());
  return data;
}

/// Writes via a sibling temp file and rename so readers never see partial files.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const auto parent = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  if (!std::filesystem::is_directory(parent)) throw IoError("parent directory does not exist: " + parent.string());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing file: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace detail

inline std::string encode_fseq(const FeatureSequence& seq) {
  seq.validate();
  const auto T = static_cast<std::uint32_t>(seq.length());
  const auto k = static_cast<std::uint32_t>(seq.dim());
  std::string buf;
  buf.reserve(kFseqHeaderBytes + std::size_t{T} * k * 4);
  buf.append(kFseqMagic.data(), kFseqMagic.size());
  detail::put_u32(buf, kFseqVersion);
  detail::put_u32(buf, T);
  detail::put_u32(buf, k);
  for (std::uint32_t t = 0; t < T; ++t)
    for (std::uint32_t c = 0; c < k; ++c) detail::put_u32(buf, std::bit_cast<std::uint32_t>(seq.frames(t, c)));
  return buf;
}

inline FeatureSequence decode_fseq(std::string_view buf, std::string id) {
  if (buf.size() < kFseqHeaderBytes) throw FormatError("FSEQ: file shorter than header (" + id + ")");
  if (!std::equal(kFseqMagic.begin(), kFseqMagic.end(), buf.begin())) throw FormatError("FSEQ: bad magic (" + id + ")");
  const std::uint32_t version = detail::get_u32(buf, 4);
  if (version != kFseqVersion)
    throw FormatError("FSEQ: unsupported version " + std::to_string(version) + " (" + id + ")");
  const std::uint32_t T = detail::get_u32(buf, 8);
  const std::uint32_t k = detail::get_u32(buf, 12);
  if (T == 0 || k == 0) throw FormatError("FSEQ: zero dimension (" + id + ")");
  const std::size_t expected = std::size_t{T} * k * 4;
  const std::size_t payload = buf.size() - kFseqHeaderBytes;
  if (payload < expected)
    throw FormatError("FSEQ: truncated payload, " + std::to_string(payload / 4) + " of " +
                      std::to_string(std::size_t{T} * k) + " values (" + id + ")");
  if (payload > expected) throw FormatError("FSEQ: trailing bytes after payload (" + id + ")");
  FeatureSequence seq;
  seq.id = std::move(id);
  seq.frames.resize(T, k);
  std::size_t off = kFseqHeaderBytes;
  for (std::uint32_t t = 0; t < T; ++t)
    for (std::uint32_t c = 0; c < k; ++c, off += 4) seq.frames(t, c) = std::bit_cast<float>(detail::get_u32(buf, off));
  if (!seq.frames.allFinite()) throw FormatError("FSEQ: non-finite values (" + seq.id + ")");
  return seq;
}

/// Writes `seq` in FSEQ format; non-finite entries raise ValidationError.
inline void save_sequence(const FeatureSequence& seq, const std::filesystem::path& path) {
  detail::write_file_atomic(path, encode_fseq(seq));
}

/// Loads an FSEQ file; the id is the filename stem.
inline FeatureSequence load_sequence(const std::filesystem::path& path) {
  auto seq = decode_fseq(detail::read_file(path), path.stem().string());
  seq.source = path;
  return seq;
}

/// Loads every *.fseq under `dir` in filename order.
inline std::vector<FeatureSequence> load_directory(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) return {};
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".fseq") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<FeatureSequence> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_sequence(f));
  return out;
}

/// Length-n windows starting at 0, stride, 2·stride, ... with m+n <= T.
inline std::vector<Window> windows(const FeatureSequence& seq, std::size_t n, std::size_t stride) {
  futurefeat::detail::require(n >= 1 && stride >= 1, "windows: n and stride must be positive");
  std::vector<Window> out;
  const std::size_t T = seq.length();
  if (n > T) return out;
  for (std::size_t m = 0; m + n <= T; m += stride)
    out.push_back(Window{seq.frames.middleRows(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)), seq.id,
                         static_cast<std::ptrdiff_t>(m)});
  return out;
}

/// Global min/max over every training entry.
inline Scaler fit_scaler(const std::vector<FeatureSequence>& train) {
  futurefeat::detail::require(!train.empty(), "fit_scaler: no training sequences");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : train) {
    if (s.frames.size() == 0) continue;
    lo = std::min(lo, static_cast<double>(s.frames.minCoeff()));
    hi = std::max(hi, static_cast<double>(s.frames.maxCoeff()));
  }
  if (!(hi > lo)) throw ValidationError("fit_scaler: degenerate scaler, training values are constant");
  return Scaler{lo, hi};
}

// ---------------------------------------------------------------------------
// Synthetic datasets

enum class Dynamics { AR1, ROTOR };

inline std::string to_string(Dynamics d) { return d == Dynamics::AR1 ? "AR1" : "ROTOR"; }

inline Dynamics parse_dynamics(std::string_view name) {
  if (name == "AR1" || name == "ar1") return Dynamics::AR1;
  if (name == "ROTOR" || name == "rotor") return Dynamics::ROTOR;
  throw ValidationError("dynamics: unknown kind '" + std::string(name) + "' (expected AR1 or ROTOR)");
}

struct SynthSpec {
  std::size_t k = 16;
  std::size_t frames = 300;
  std::size_t train_count = 20;
  std::size_t test_count = 5;
  Dynamics dynamics = Dynamics::AR1;
  /// AR1: innovation std; ROTOR: observation noise std.
  double noise = 0.1;
  double rho = 0.9;
  /// ROTOR angular velocities are drawn per sequence and per rotor from
  /// [omega_min, omega_max] radians/frame, then held fixed.
  double omega_min = 0.05;
  double omega_max = 0.6;
  int classes = 4;
  /// Label at frame t describes the state at frame t + label_lead.
  std::size_t label_lead = 4;

  void validate() const {
    using futurefeat::detail::require;
    require(k >= 1, "synth: k must be >= 1");
    require(frames >= 1, "synth: frames must be >= 1");
    require(train_count + test_count >= 1, "synth: need at least one sequence");
    require(std::isfinite(noise) && noise >= 0.0, "synth: noise must be >= 0");
    require(classes >= 1, "synth: classes must be >= 1");
    if (dynamics == Dynamics::AR1) require(rho >= 0.0 && rho < 1.0, "synth: rho must lie in [0, 1)");
    if (dynamics == Dynamics::ROTOR) {
      require(k % 2 == 0, "synth: ROTOR needs an even k");
      require(omega_min <= omega_max, "synth: omega_min must not exceed omega_max");
    }
  }
};

struct SynthDataset {
  DatasetSplit split;
  std::vector<segeval::FrameLabels> train_labels;
  std::vector<segeval::FrameLabels> test_labels;
  /// ROTOR only: per-rotor angular velocities of every sequence, by id.
  std::map<std::string, std::vector<double>> omegas;
};

/// 2x2 block-diagonal rotation by the given per-rotor angles.
inline Eigen::MatrixXd rotor_matrix(const std::vector<double>& omegas) {
  const auto k = static_cast<Eigen::Index>(2 * omegas.size());
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t j = 0; j < omegas.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(2 * j);
    r(i, i) = std::cos(omegas[j]);
    r(i, i + 1) = -std::sin(omegas[j]);
    r(i + 1, i) = std::sin(omegas[j]);
    r(i + 1, i + 1) = std::cos(omegas[j]);
  }
  return r;
}

namespace detail {

inline int quantize(double x, double lo, double hi, int classes) {
  const double u = (x - lo) / (hi - lo);
  return std::clamp(static_cast<int>(std::floor(u * classes)), 0, classes - 1);
}

struct SynthSequence {
  FeatureSequence seq;
  segeval::FrameLabels labels;
  /// ROTOR only: per-rotor angular velocities.
  std::vector<double> omegas;
};

inline SynthSequence synth_one(const SynthSpec& spec, std::mt19937_64& rng, std::string id) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t total = spec.frames + spec.label_lead;
  const auto k = static_cast<Eigen::Index>(spec.k);
  Eigen::MatrixXd state(static_cast<Eigen::Index>(total), k);
  SynthSequence out;
  std::vector<double> label_signal(total);

  if (spec.dynamics == Dynamics::AR1) {
    const double stat = spec.noise / std::sqrt(1.0 - spec.rho * spec.rho);
    const double init = stat > 0.0 ? stat : 1.0;
    for (Eigen::Index c = 0; c < k; ++c) state(0, c) = init * normal(rng);
    for (std::size_t t = 1; t < total; ++t)
      for (Eigen::Index c = 0; c < k; ++c)
        state(static_cast<Eigen::Index>(t), c) =
            spec.rho * state(static_cast<Eigen::Index>(t - 1), c) + spec.noise * normal(rng);
    const double spread = 2.0 * init;
    for (std::size_t t = 0; t < total; ++t) label_signal[t] = state(static_cast<Eigen::Index>(t), 0);
    out.labels.classes = spec.classes;
    out.labels.labels.resize(spec.frames);
    for (std::size_t t = 0; t < spec.frames; ++t)
      out.labels.labels[t] = quantize(label_signal[t + spec.label_lead], -spread, spread, spec.classes);
  } else {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> omega(spec.omega_min, spec.omega_max);
    std::uniform_real_distribution<double> amp(0.5, 1.5);
    const std::size_t rotors = spec.k / 2;
    out.omegas.resize(rotors);
    for (std::size_t j = 0; j < rotors; ++j) {
      const double a = amp(rng), p = phase(rng);
      out.omegas[j] = omega(rng);
      state(0, static_cast<Eigen::Index>(2 * j)) = a * std::cos(p);
      state(0, static_cast<Eigen::Index>(2 * j + 1)) = a * std::sin(p);
    }
    const Eigen::MatrixXd rot = rotor_matrix(out.omegas);
    for (std::size_t t = 1; t < total; ++t)
      state.row(static_cast<Eigen::Index>(t)) = (rot * state.row(static_cast<Eigen::Index>(t - 1)).transpose()).transpose();
    out.labels.classes = spec.classes;
    out.labels.labels.resize(spec.frames);
    for (std::size_t t = 0; t < spec.frames; ++t) {
      const auto s = static_cast<Eigen::Index>(t + spec.label_lead);
      double ang = std::atan2(state(s, 1), state(s, 0));
      if (ang < 0.0) ang += 2.0 * std::numbers::pi;
      out.labels.labels[t] = quantize(ang, 0.0, 2.0 * std::numbers::pi, spec.classes);
    }
    for (std::size_t t = 0; t < total; ++t)
      for (Eigen::Index c = 0; c < k; ++c) state(static_cast<Eigen::Index>(t), c) += spec.noise * normal(rng);
  }

  out.seq.id = std::move(id);
  out.seq.frames = state.topRows(static_cast<Eigen::Index>(spec.frames)).cast<float>();
  return out;
}

}  // namespace detail

/// Deterministic in (spec, seed).
inline SynthDataset synthesize_dataset(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  SynthDataset out;
  auto name = [](const char* prefix, std::size_t i) {
    std::string digits = std::to_string(i);
    return std::string(prefix) + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
  };
  for (std::size_t i = 0; i < spec.train_count; ++i) {
    auto s = detail::synth_one(spec, rng, name("train_", i));
    if (!s.omegas.empty()) out.omegas[s.seq.id] = s.omegas;
    out.split.train.push_back(std::move(s.seq));
    out.train_labels.push_back(std::move(s.labels));
  }
  for (std::size_t i = 0; i < spec.test_count; ++i) {
    auto s = detail::synth_one(spec, rng, name("test_", i));
    if (!s.omegas.empty()) out.omegas[s.seq.id] = s.omegas;
    out.split.test.push_back(std::move(s.seq));
    out.test_labels.push_back(std::move(s.labels));
  }
  return out;
}

}  // namespace seqio
}  // namespace futurefeat
