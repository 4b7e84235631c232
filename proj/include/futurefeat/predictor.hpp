#pragma once

#include <concepts>
#include <span>

#include "futurefeat/seqio.hpp"

namespace futurefeat {

/// Anything that maps a batch of windows to one predicted next vector per
/// window (rows of the returned B×k matrix, in input order).  The trained
/// generator and the analytic stubs used in tests both model this.
template <class P>
concept NextVectorPredictor = requires(const P& p, std::span<const Window> batch) {
  { p.predict(batch) } -> std::convertible_to<FeatureMatrix>;
};

/// Single-window convenience wrapper.
template <NextVectorPredictor P>
FeatureVector predict_one(const P& p, const Window& w) {
  FeatureMatrix out = p.predict(std::span<const Window>(&w, 1));
  return out.row(0);
}

}  // namespace futurefeat
