#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "futurefeat/errors.hpp"

namespace futurefeat::segeval {

/// Per-frame action labels in [0, classes).
struct FrameLabels {
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const { return labels.size(); }
  bool operator==(const FrameLabels&) const = default;

  void validate() const {
    futurefeat::detail::require(classes > 0, "FrameLabels: class count must be positive");
    for (int y : labels)
      futurefeat::detail::require(y >= 0 && y < classes, "FrameLabels: label " + std::to_string(y) + " outside [0, classes)");
  }
};

/// Labels file: one integer per line.
inline void save_labels(const FrameLabels& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open labels file for writing: " + path.string());
  for (int y : labels.labels) out << y << '\n';
  if (!out) throw IoError("failed writing labels file: " + path.string());
}

/// Reads a labels file; `classes` is max label + 1 unless given.
inline FrameLabels load_labels(const std::filesystem::path& path, int classes = 0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file: " + path.string());
  FrameLabels out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::size_t used = 0;
    int y = 0;
    try {
      y = std::stoi(line, &used);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not an integer label");
    }
    if (y < 0) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": negative label");
    out.labels.push_back(y);
  }
  int mx = -1;
  for (int y : out.labels) mx = std::max(mx, y);
  out.classes = classes > 0 ? classes : mx + 1;
  if (out.labels.empty()) throw FormatError("empty labels file: " + path.string());
  out.validate();
  return out;
}

}  // namespace futurefeat::segeval
