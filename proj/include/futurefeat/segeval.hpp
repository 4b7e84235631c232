#pragma once

// Frame accuracy, segmental edit score and F1@τ.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <vector>

#include "futurefeat/errors.hpp"
#include "futurefeat/labels.hpp"

namespace futurefeat::segeval {

struct Segment {
  int label = 0;
  std::size_t start = 0;  ///< inclusive
  std::size_t end = 0;    ///< inclusive

  std::size_t length() const { return end - start + 1; }
  bool operator==(const Segment&) const = default;
};

inline std::vector<Segment> labels_to_segments(const std::vector<int>& labels) {
  futurefeat::detail::require(!labels.empty(), "labels_to_segments: empty labels");
  std::vector<Segment> out;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (out.empty() || out.back().label != labels[t]) out.push_back({labels[t], t, t});
    else out.back().end = t;
  }
  return out;
}

inline std::vector<Segment> labels_to_segments(const FrameLabels& labels) { return labels_to_segments(labels.labels); }

inline std::vector<int> segments_to_labels(const std::vector<Segment>& segs) {
  std::vector<int> out;
  for (const auto& s : segs) {
    futurefeat::detail::require(s.start <= s.end && s.start == out.size(), "segments_to_labels: segments must tile the timeline");
    out.insert(out.end(), s.length(), s.label);
  }
  return out;
}

namespace detail {

inline void same_length(const std::vector<int>& gt, const std::vector<int>& pred, const char* who) {
  futurefeat::detail::require(gt.size() == pred.size(), std::string(who) + ": length mismatch (" +
                                                           std::to_string(gt.size()) + " vs " +
                                                           std::to_string(pred.size()) + ")");
  futurefeat::detail::require(!gt.empty(), std::string(who) + ": empty labels");
}

inline std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double iou(const Segment& a, const Segment& b) {
  const std::size_t lo = std::max(a.start, b.start), hi = std::min(a.end, b.end);
  const double inter = hi >= lo ? static_cast<double>(hi - lo + 1) : 0.0;
  const double uni = static_cast<double>(a.length() + b.length()) - inter;
  return inter / uni;
}

/// Size of a maximum matching in a bipartite graph given as adjacency lists
/// from left to right vertices (Kuhn's augmenting paths).
inline std::size_t max_matching(const std::vector<std::vector<std::size_t>>& adj, std::size_t right_count) {
  std::vector<std::ptrdiff_t> owner(right_count, -1);
  std::size_t size = 0;
  for (std::size_t u = 0; u < adj.size(); ++u) {
    std::vector<char> seen(right_count, 0);
    std::function<bool(std::size_t)> augment = [&](std::size_t v) {
      for (std::size_t r : adj[v]) {
        if (seen[r]) continue;
        seen[r] = 1;
        if (owner[r] < 0 || augment(static_cast<std::size_t>(owner[r]))) {
          owner[r] = static_cast<std::ptrdiff_t>(v);
          return true;
        }
      }
      return false;
    };
    if (augment(u)) ++size;
  }
  return size;
}

}  // namespace detail

/// Fraction of frames whose labels agree, in [0, 1].
inline double frame_accuracy(const std::vector<int>& gt, const std::vector<int>& pred) {
  detail::same_length(gt, pred, "frame_accuracy");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) hits += gt[t] == pred[t];
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

/// 100·(1 − Levenshtein / max(#segments)) over segment class strings.
inline double edit_score(const std::vector<int>& gt, const std::vector<int>& pred) {
  detail::same_length(gt, pred, "edit_score");
  auto classes = [](const std::vector<int>& labels) {
    std::vector<int> out;
    for (const auto& s : labels_to_segments(labels)) out.push_back(s.label);
    return out;
  };
  const auto a = classes(gt), b = classes(pred);
  const double d = static_cast<double>(detail::levenshtein(a, b));
  return 100.0 * (1.0 - d / static_cast<double>(std::max(a.size(), b.size())));
}

struct F1Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// A predicted segment counts as a hit when matched one-to-one with a
/// same-class ground-truth segment whose IoU exceeds tau.  The number of hits
/// is the largest such matching.  Segments need not tile a common timeline.
inline F1Counts f1_counts(const std::vector<Segment>& g, const std::vector<Segment>& p, double tau) {
  futurefeat::detail::require(tau > 0.0 && tau < 1.0, "f1_at_k: tau must lie in (0, 1)");
  futurefeat::detail::require(!g.empty() && !p.empty(), "f1_at_k: empty segment list");
  std::vector<std::vector<std::size_t>> adj(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      if (p[i].label == g[j].label && detail::iou(p[i], g[j]) > tau) adj[i].push_back(j);
  const std::size_t tp = detail::max_matching(adj, g.size());
  return F1Counts{tp, p.size() - tp, g.size() - tp};
}

inline F1Counts f1_counts(const std::vector<int>& gt, const std::vector<int>& pred, double tau) {
  detail::same_length(gt, pred, "f1_at_k");
  return f1_counts(labels_to_segments(gt), labels_to_segments(pred), tau);
}

inline double f1_from_counts(const F1Counts& c) {
  const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

inline double f1_at_k(const std::vector<Segment>& gt, const std::vector<Segment>& pred, double tau) {
  return f1_from_counts(f1_counts(gt, pred, tau));
}

inline double f1_at_k(const std::vector<int>& gt, const std::vector<int>& pred, double tau) {
  return f1_from_counts(f1_counts(gt, pred, tau));
}

inline double frame_accuracy(const FrameLabels& gt, const FrameLabels& pred) { return frame_accuracy(gt.labels, pred.labels); }
inline double edit_score(const FrameLabels& gt, const FrameLabels& pred) { return edit_score(gt.labels, pred.labels); }
inline double f1_at_k(const FrameLabels& gt, const FrameLabels& pred, double tau) {
  return f1_at_k(gt.labels, pred.labels, tau);
}

}  // namespace futurefeat::segeval
