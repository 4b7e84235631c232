#pragma once

#include <cmath>
#include <vector>

#include "futurefeat/autodiff.hpp"
#include "futurefeat/errors.hpp"

namespace futurefeat::optim {

struct AdamConfig {
  double lr = 3e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    futurefeat::detail::require(lr > 0.0, "Adam: lr must be positive");
    futurefeat::detail::require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam: betas must lie in [0, 1)");
    futurefeat::detail::require(eps > 0.0, "Adam: eps must be positive");
  }
};

/// Bias-corrected Adam.  The parameter list must be identical (same order,
/// same shapes) on every step; a missing gradient counts as zero.
template <std::floating_point T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) { cfg.validate(); }

  void step(const std::vector<ad::Parameter<T>*>& params, const ad::Gradients<T>& grads) {
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
      }
    }
    futurefeat::detail::require(m_.size() == params.size(), "Adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& val = params[i]->value.data;
      futurefeat::detail::require(val.size() == m_[i].size(), "Adam: parameter shape changed between steps");
      const ad::Tensor<T>* g = grads.find(*params[i]);
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < val.size(); ++j) {
        const double gj = g ? static_cast<double>((*g)[j]) : 0.0;
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        val[j] = static_cast<T>(static_cast<double>(val[j]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace futurefeat::optim
