#pragma once

// Iterated ℓ-step prediction and i-encoded feature replacement.

#include <algorithm>
#include <filesystem>
#include <span>
#include <string>
#include <system_error>
#include <vector>

#include "futurefeat/errors.hpp"
#include "futurefeat/predictor.hpp"
#include "futurefeat/seqio.hpp"

namespace futurefeat::rollout {

/// Steps ahead a replacement feature is predicted.
struct PredictionHorizon {
  std::size_t i = 1;

  explicit PredictionHorizon(std::size_t steps) : i(steps) {
    futurefeat::detail::require(steps >= 1, "horizon must be >= 1");
  }
};

namespace detail {

template <class P>
void check_shape(const P& gen, std::size_t k, std::size_t n) {
  if constexpr (requires { gen.config().k; gen.config().n; }) {
    futurefeat::detail::require(gen.config().k == k && gen.config().n == n,
                                "generator expects windows of " + std::to_string(gen.config().n) + "x" +
                                    std::to_string(gen.config().k) + ", got " + std::to_string(n) + "x" +
                                    std::to_string(k));
  }
}

/// Slides every window one step: drop the first row, append the matching
/// prediction row.
inline void advance(std::vector<Window>& batch, const FeatureMatrix& pred) {
  for (std::size_t b = 0; b < batch.size(); ++b) {
    FeatureMatrix& v = batch[b].vectors;
    const Eigen::Index n = v.rows();
    if (n > 1) v.topRows(n - 1) = v.bottomRows(n - 1).eval();
    v.row(n - 1) = pred.row(static_cast<Eigen::Index>(b));
    ++batch[b].start;
  }
}

}  // namespace detail

/// Batched rollout: entry b of the result holds the l predictions for
/// windows[b], one per row in prediction order.
template <NextVectorPredictor P>
std::vector<FeatureMatrix> predict_future_batch(const P& gen, std::vector<Window> windows, std::size_t l) {
  futurefeat::detail::require(l >= 1, "rollout length l must be >= 1");
  std::vector<FeatureMatrix> out(windows.size());
  if (windows.empty()) return out;
  const std::size_t n = windows.front().length(), k = windows.front().dim();
  futurefeat::detail::require(n >= 1, "rollout: empty window");
  for (const auto& w : windows)
    futurefeat::detail::require(w.length() == n && w.dim() == k, "rollout: windows differ in shape");
  detail::check_shape(gen, k, n);
  for (auto& m : out) m.resize(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < l; ++j) {
    const FeatureMatrix pred = gen.predict(std::span<const Window>(windows));
    futurefeat::detail::require(pred.rows() == static_cast<Eigen::Index>(windows.size()) &&
                                    pred.cols() == static_cast<Eigen::Index>(k),
                                "rollout: predictor returned the wrong shape");
    for (std::size_t b = 0; b < windows.size(); ++b)
      out[b].row(static_cast<Eigen::Index>(j)) = pred.row(static_cast<Eigen::Index>(b));
    if (j + 1 < l) detail::advance(windows, pred);
  }
  return out;
}

/// l×k: v̂[t+1], …, v̂[t+l] for a window ending at t.
template <NextVectorPredictor P>
FeatureMatrix predict_future(const P& gen, const Window& window, std::size_t l) {
  return std::move(predict_future_batch(gen, std::vector<Window>{window}, l).front());
}

/// l×k: v̂[m−1], …, v̂[m−l] for a window starting at m, obtained by rolling
/// forward over the row-reversed window.
template <NextVectorPredictor P>
FeatureMatrix predict_past(const P& gen, const Window& window, std::size_t l) {
  Window rev = window;
  rev.vectors = window.vectors.colwise().reverse();
  return predict_future(gen, rev, l);
}

/// The n-row window ending at frame t, left-padded by repeating row 0.
inline Window window_ending_at(const FeatureSequence& seq, std::size_t t, std::size_t n) {
  const auto k = static_cast<Eigen::Index>(seq.dim());
  Window w{FeatureMatrix(static_cast<Eigen::Index>(n), k), seq.id,
           static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(n) + 1};
  for (std::size_t r = 0; r < n; ++r) {
    const std::ptrdiff_t src = w.start + static_cast<std::ptrdiff_t>(r);
    w.vectors.row(static_cast<Eigen::Index>(r)) = seq.frames.row(static_cast<Eigen::Index>(std::max<std::ptrdiff_t>(src, 0)));
  }
  return w;
}

inline std::string encoded_id(const std::string& id, PredictionHorizon h) { return id + ".enc" + std::to_string(h.i); }

/// Replaces every frame t by the i-th rollout prediction from the window
/// ending at t.  Frames are processed in batches of `batch_size` windows.
template <NextVectorPredictor P>
FeatureSequence encode_sequence(const P& gen, const FeatureSequence& seq, PredictionHorizon horizon, std::size_t n,
                                std::size_t batch_size = 256) {
  futurefeat::detail::require(n >= 1, "encode_sequence: n must be >= 1");
  futurefeat::detail::require(seq.length() >= 1, "encode_sequence: empty sequence");
  detail::check_shape(gen, seq.dim(), n);
  FeatureSequence out{encoded_id(seq.id, horizon), FeatureMatrix(seq.frames.rows(), seq.frames.cols()), seq.fps, {}};
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t first = 0; first < seq.length(); first += batch_size) {
    const std::size_t last = std::min(seq.length(), first + batch_size);
    std::vector<Window> batch;
    batch.reserve(last - first);
    for (std::size_t t = first; t < last; ++t) batch.push_back(window_ending_at(seq, t, n));
    const auto preds = predict_future_batch(gen, std::move(batch), horizon.i);
    for (std::size_t t = first; t < last; ++t)
      out.frames.row(static_cast<Eigen::Index>(t)) = preds[t - first].row(static_cast<Eigen::Index>(horizon.i - 1));
  }
  return out;
}

struct ManifestRow {
  std::string id;
  std::filesystem::path input_path;
  std::filesystem::path output_path;
  std::size_t horizon = 1;
  /// Empty on success.
  std::string error;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path path;

  bool ok() const {
    return std::none_of(rows.begin(), rows.end(), [](const ManifestRow& r) { return !r.error.empty(); });
  }
};

inline constexpr const char* kManifestHeader = "id,input_path,output_path,horizon";

/// Failed rows carry `ERROR: <message>` in the output_path column.
inline std::string manifest_csv(const Manifest& m) {
  auto clean = [](std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
  };
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : m.rows) {
    out += clean(r.id) + "," + clean(r.input_path.generic_string()) + ",";
    out += r.error.empty() ? clean(r.output_path.generic_string()) : "ERROR: " + clean(r.error);
    out += "," + std::to_string(r.horizon) + "\n";
  }
  return out;
}

/// Writes out_dir/{train,test}/<id>.enc<i>.fseq and out_dir/manifest.csv,
/// with manifest rows ordered by sequence id.  Per-sequence failures are
/// recorded in the manifest rather than thrown.
template <NextVectorPredictor P>
Manifest encode_dataset(const P& gen, const DatasetSplit& split, PredictionHorizon horizon, std::size_t n,
                        const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw IoError("cannot create output directory: " + out_dir.string());
  Manifest manifest;
  manifest.path = out_dir / "manifest.csv";
  auto run = [&](const std::vector<FeatureSequence>& part, const char* sub) {
    for (const auto& seq : part) {
      ManifestRow row{seq.id, seq.source, out_dir / sub / (encoded_id(seq.id, horizon) + ".fseq"), horizon.i, {}};
      try {
        fs::create_directories(row.output_path.parent_path(), ec);
        seqio::save_sequence(encode_sequence(gen, seq, horizon, n), row.output_path);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      manifest.rows.push_back(std::move(row));
    }
  };
  run(split.train, "train");
  run(split.test, "test");
  std::stable_sort(manifest.rows.begin(), manifest.rows.end(),
                   [](const ManifestRow& a, const ManifestRow& b) { return a.id < b.id; });
  seqio::detail::write_file_atomic(manifest.path, manifest_csv(manifest));
  return manifest;
}

}  // namespace futurefeat::rollout
