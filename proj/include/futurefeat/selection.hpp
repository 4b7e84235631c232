#pragma once

// Post-hoc epoch selection: min-max normalise every metric across epochs
// (train and test independently), invert MSE so that higher is better,
// rank epochs by mean test score, keep the best top_k and pick the one whose
// test score sits closest to its train score.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "futurefeat/errors.hpp"
#include "futurefeat/seqio.hpp"
#include "futurefeat/simmetrics.hpp"

namespace futurefeat::selection {

using simmetrics::MetricTriple;

struct EpochRecord {
  int epoch = 0;
  MetricTriple train;
  /// Absent when the run had no test sequences.
  std::optional<MetricTriple> test;

  bool operator==(const EpochRecord&) const = default;
};

/// Which normalised metrics enter the per-epoch score.
struct MetricMask {
  bool mse = true;
  bool psnr = true;
  bool ssim = true;

  std::size_t count() const { return static_cast<std::size_t>(mse) + psnr + ssim; }
};

struct SelectionConfig {
  std::size_t top_k = 25;
  /// When false, top_k is clamped to the number of epochs instead of failing.
  bool strict = true;
  MetricMask metrics;
};

struct NormalizedScores {
  double mse_hat = 0.0;  ///< 1 − normalised MSE
  double psnr = 0.0;
  double ssim = 0.0;
  double score = 0.0;  ///< mean of the enabled entries above
};

struct NormalizedRow {
  int epoch = 0;
  NormalizedScores train;
  NormalizedScores test;
};

namespace detail {

inline std::vector<double> min_max(const std::vector<double>& xs) {
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  std::vector<double> out(xs.size(), 0.5);
  if (*hi > *lo)
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - *lo) / (*hi - *lo);
  return out;
}

inline std::vector<EpochRecord> sorted_by_epoch(std::vector<EpochRecord> records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.epoch < b.epoch; });
  for (std::size_t i = 1; i < records.size(); ++i)
    futurefeat::detail::require(records[i].epoch != records[i - 1].epoch,
                                "duplicate epoch " + std::to_string(records[i].epoch) + " in records");
  return records;
}

}  // namespace detail

/// Rows come back ordered by epoch.
inline std::vector<NormalizedRow> normalize_records(const std::vector<EpochRecord>& input, MetricMask mask = {}) {
  futurefeat::detail::require(input.size() >= 2, "normalize_records: needs at least 2 epochs");
  futurefeat::detail::require(mask.count() > 0, "normalize_records: no metric selected");
  const auto records = detail::sorted_by_epoch(input);
  for (const auto& r : records)
    futurefeat::detail::require(r.test.has_value(), "normalize_records: epoch " + std::to_string(r.epoch) +
                                                        " has no test metrics");
  const std::size_t n = records.size();
  std::vector<NormalizedRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i].epoch = records[i].epoch;

  for (int split = 0; split < 2; ++split) {
    auto pick = [&](auto member) {
      std::vector<double> xs(n);
      for (std::size_t i = 0; i < n; ++i) xs[i] = (split == 0 ? records[i].train : *records[i].test).*member;
      return detail::min_max(xs);
    };
    const auto m = pick(&MetricTriple::mse);
    const auto p = pick(&MetricTriple::psnr);
    const auto s = pick(&MetricTriple::ssim);
    for (std::size_t i = 0; i < n; ++i) {
      NormalizedScores& out = split == 0 ? rows[i].train : rows[i].test;
      out.mse_hat = 1.0 - m[i];
      out.psnr = p[i];
      out.ssim = s[i];
      double acc = 0.0;
      if (mask.mse) acc += out.mse_hat;
      if (mask.psnr) acc += out.psnr;
      if (mask.ssim) acc += out.ssim;
      out.score = acc / static_cast<double>(mask.count());
    }
  }
  return rows;
}

struct SelectionOutcome {
  int epoch = 0;
  std::size_t top_k_used = 0;
  bool clamped = false;
  /// Candidate epochs in rank order (best test score first).
  std::vector<int> candidates;
};

inline SelectionOutcome select_epoch_detailed(const std::vector<EpochRecord>& records, const SelectionConfig& cfg) {
  futurefeat::detail::require(cfg.top_k >= 1, "select_epoch: top_k must be >= 1");
  SelectionOutcome out;
  out.top_k_used = cfg.top_k;
  if (records.size() < cfg.top_k) {
    if (cfg.strict)
      throw ValidationError("select_epoch: " + std::to_string(records.size()) + " epochs is fewer than top_k=" +
                            std::to_string(cfg.top_k));
    out.top_k_used = records.size();
    out.clamped = true;
  }
  auto rows = normalize_records(records, cfg.metrics);
  std::stable_sort(rows.begin(), rows.end(), [](const NormalizedRow& a, const NormalizedRow& b) {
    if (a.test.score != b.test.score) return a.test.score > b.test.score;
    return a.epoch < b.epoch;
  });
  rows.resize(out.top_k_used);
  const NormalizedRow* best = nullptr;
  double best_gap = 0.0;
  for (const auto& r : rows) {
    out.candidates.push_back(r.epoch);
    const double gap = std::abs(r.test.score - r.train.score);
    if (!best || gap < best_gap || (gap == best_gap && r.epoch < best->epoch)) {
      best = &r;
      best_gap = gap;
    }
  }
  out.epoch = best->epoch;
  return out;
}

inline int select_epoch(const std::vector<EpochRecord>& records, const SelectionConfig& cfg = {}) {
  return select_epoch_detailed(records, cfg).epoch;
}

// ---------------------------------------------------------------------------
// Records CSV: header `epoch,split,mse,psnr,ssim`, one row per (epoch, split).

inline constexpr const char* kRecordsHeader = "epoch,split,mse,psnr,ssim";

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string records_csv(const std::vector<EpochRecord>& records) {
  std::ostringstream out;
  out << kRecordsHeader << '\n';
  auto row = [&](int epoch, const char* split, const MetricTriple& m) {
    out << epoch << ',' << split << ',' << format_double(m.mse) << ',' << format_double(m.psnr) << ','
        << format_double(m.ssim) << '\n';
  };
  for (const auto& r : records) {
    row(r.epoch, "train", r.train);
    if (r.test) row(r.epoch, "test", *r.test);
  }
  return out.str();
}

inline void write_records_csv(const std::vector<EpochRecord>& records, const std::filesystem::path& path) {
  seqio::detail::write_file_atomic(path, records_csv(records));
}

inline std::vector<EpochRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open records file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || (line != kRecordsHeader && line != std::string(kRecordsHeader) + "\r"))
    throw FormatError(path.string() + ": expected header '" + kRecordsHeader + "'");
  std::map<int, EpochRecord> by_epoch;
  std::set<std::pair<int, std::string>> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != 5) throw FormatError(where + ": expected 5 fields");
    MetricTriple m;
    int epoch = 0;
    try {
      epoch = std::stoi(cells[0]);
      m = MetricTriple{std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4])};
    } catch (const std::exception&) {
      throw FormatError(where + ": malformed number");
    }
    if (cells[1] != "train" && cells[1] != "test") throw FormatError(where + ": split must be train or test");
    if (!seen.insert({epoch, cells[1]}).second) throw FormatError(where + ": duplicate row");
    auto& rec = by_epoch[epoch];
    rec.epoch = epoch;
    if (cells[1] == "train") rec.train = m;
    else rec.test = m;
  }
  std::vector<EpochRecord> out;
  for (auto& [epoch, rec] : by_epoch) {
    if (!seen.contains({epoch, "train"})) throw FormatError(path.string() + ": epoch " + std::to_string(epoch) + " lacks a train row");
    out.push_back(rec);
  }
  return out;
}

}  // namespace futurefeat::selection
