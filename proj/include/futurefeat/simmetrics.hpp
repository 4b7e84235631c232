#pragma once

// Vector similarity metrics and their per-epoch aggregation.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "futurefeat/errors.hpp"
#include "futurefeat/predictor.hpp"
#include "futurefeat/seqio.hpp"

namespace futurefeat::simmetrics {

struct MetricTriple {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;

  bool operator==(const MetricTriple&) const = default;
};

/// PSNR flavour: `Paper` puts √MSE in the denominator, `Standard` uses MSE.
enum class PsnrVariant { Paper, Standard };

/// Floor applied to the MSE inside PSNR so identical vectors stay finite.
inline constexpr double kMseFloor = 1e-12;

struct SsimConstants {
  double c1 = 0.0;
  double c2 = 0.0;

  static SsimConstants for_range(double dynamic_range = Scaler::kRange) {
    return SsimConstants{(0.01 * dynamic_range) * (0.01 * dynamic_range),
                         (0.03 * dynamic_range) * (0.03 * dynamic_range)};
  }
};

namespace detail {

template <class A, class B>
void check_dims(const Eigen::DenseBase<A>& v, const Eigen::DenseBase<B>& w, const char* who) {
  futurefeat::detail::require(v.size() == w.size(), std::string(who) + ": dimension mismatch (" +
                                                        std::to_string(v.size()) + " vs " +
                                                        std::to_string(w.size()) + ")");
  futurefeat::detail::require(v.size() >= 1, std::string(who) + ": empty vectors");
}

}  // namespace detail

/// Mean squared difference, (1/k)·Σ (v_i − w_i)².
template <class A, class B>
double mse(const Eigen::DenseBase<A>& v, const Eigen::DenseBase<B>& w) {
  detail::check_dims(v, w, "mse");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double d = static_cast<double>(v.derived().coeff(i)) - static_cast<double>(w.derived().coeff(i));
    acc += d * d;
  }
  return acc / static_cast<double>(v.size());
}

/// PSNR in dB from an MSE already measured on the 0-255 scale.
inline double psnr_from_mse(double scaled_mse, PsnrVariant variant = PsnrVariant::Paper) {
  const double m = std::max(scaled_mse, kMseFloor);
  const double peak = Scaler::kRange * Scaler::kRange;
  return variant == PsnrVariant::Paper ? 10.0 * std::log10(peak / std::sqrt(m)) : 10.0 * std::log10(peak / m);
}

template <class A, class B>
double psnr(const Eigen::DenseBase<A>& v, const Eigen::DenseBase<B>& w, const Scaler& scaler,
            PsnrVariant variant = PsnrVariant::Paper) {
  detail::check_dims(v, w, "psnr");
  return psnr_from_mse(mse(scaler.apply_all(v.derived()), scaler.apply_all(w.derived())), variant);
}

/// SSIM over whole-vector statistics.  Variances and covariance use the
/// population (1/k) normalisation.
template <class A, class B>
double ssim(const Eigen::DenseBase<A>& v, const Eigen::DenseBase<B>& w, const SsimConstants& consts,
            const Scaler& scaler) {
  detail::check_dims(v, w, "ssim");
  futurefeat::detail::require(v.size() >= 2, "ssim: needs k >= 2");
  const Eigen::VectorXd a = scaler.apply_all(v.derived());
  const Eigen::VectorXd b = scaler.apply_all(w.derived());
  const double k = static_cast<double>(a.size());
  const double mu_a = a.sum() / k;
  const double mu_b = b.sum() / k;
  auto centred_dot = [k](const Eigen::VectorXd& x, double mx, const Eigen::VectorXd& y, double my) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) acc += (x[i] - mx) * (y[i] - my);
    return acc / k;
  };
  const double var_a = centred_dot(a, mu_a, a, mu_a);
  const double var_b = centred_dot(b, mu_b, b, mu_b);
  const double cov = centred_dot(a, mu_a, b, mu_b);
  return ((2.0 * mu_a * mu_b + consts.c1) * (2.0 * cov + consts.c2)) /
         ((mu_a * mu_a + mu_b * mu_b + consts.c1) * (var_a + var_b + consts.c2));
}

template <class A, class B>
MetricTriple compare(const Eigen::DenseBase<A>& prediction, const Eigen::DenseBase<B>& truth, const Scaler& scaler,
                     PsnrVariant variant = PsnrVariant::Paper) {
  return MetricTriple{mse(prediction, truth), psnr(prediction, truth, scaler, variant),
                      ssim(prediction, truth, SsimConstants::for_range(), scaler)};
}

/// Averages 1-step metrics over every stride-1 window of length n that has a
/// ground-truth successor, pooled across all sequences.
template <NextVectorPredictor P>
MetricTriple evaluate_generator(const P& gen, const std::vector<FeatureSequence>& data, std::size_t n,
                                const Scaler& scaler, PsnrVariant variant = PsnrVariant::Paper,
                                std::size_t batch_size = 256) {
  futurefeat::detail::require(n >= 1, "evaluate_generator: window length must be positive");
  MetricTriple sum;
  std::size_t pairs = 0;
  std::vector<Window> batch;
  std::vector<FeatureVector> truths;
  auto flush = [&] {
    if (batch.empty()) return;
    const FeatureMatrix pred = gen.predict(std::span<const Window>(batch));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto r = compare(pred.row(static_cast<Eigen::Index>(i)), truths[i], scaler, variant);
      sum.mse += r.mse;
      sum.psnr += r.psnr;
      sum.ssim += r.ssim;
      ++pairs;
    }
    batch.clear();
    truths.clear();
  };
  for (const auto& seq : data) {
    if (seq.length() < n + 1) continue;
    for (std::size_t m = 0; m + n < seq.length(); ++m) {
      batch.push_back(Window{seq.frames.middleRows(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)), seq.id,
                             static_cast<std::ptrdiff_t>(m)});
      truths.push_back(seq.frames.row(static_cast<Eigen::Index>(m + n)));
      if (batch.size() == batch_size) flush();
    }
  }
  flush();
  futurefeat::detail::require(pairs > 0, "evaluate_generator: no window with a ground-truth successor");
  const double inv = 1.0 / static_cast<double>(pairs);
  return MetricTriple{sum.mse * inv, sum.psnr * inv, sum.ssim * inv};
}

}  // namespace futurefeat::simmetrics
