#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tinyloc/autodiff.hpp"
#include "tinyloc/rng.hpp"
#include "tinyloc/tensor.hpp"

namespace tinyloc::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Standard Adam with bias correction over a fixed parameter list.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.push_back(Tensor<T>::zeros(p.value().shape));
      v_.push_back(Tensor<T>::zeros(p.value().shape));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, t_));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& p = params_[pi];
      if (p.grad().data.empty()) continue;  // never touched by backward
      auto& val = p.mutable_value();
      const auto& g = p.grad();
      for (std::size_t i = 0; i < val.count(); ++i) {
        const T gi = g[i];
        if (!std::isfinite(gi))
          throw std::runtime_error("adam_step: non-finite gradient in '" +
                                   p.name() + "' at index " +
                                   std::to_string(i));
        m_[pi][i] = T(cfg_.beta1) * m_[pi][i] + (T(1) - T(cfg_.beta1)) * gi;
        v_[pi][i] = T(cfg_.beta2) * v_[pi][i] + (T(1) - T(cfg_.beta2)) * gi * gi;
        const T mhat = m_[pi][i] / bc1;
        const T vhat = v_[pi][i] / bc2;
        val[i] -= T(cfg_.lr) * mhat / (std::sqrt(vhat) + T(cfg_.eps));
      }
    }
  }

  long steps_taken() const { return t_; }

 private:
  std::vector<Var<T>> params_;
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

/// Central finite differences vs. analytic gradient, fp64. Returns the max
/// over sampled coordinates of |a−n| / max(|a|,|n|,1e-8). loss_fn must
/// rebuild the graph from the current parameter values on every call.
inline double grad_check(const std::function<Var<double>()>& loss_fn,
                         std::vector<Var<double>> params, double eps = 1e-5,
                         std::size_t max_coords_per_param = 64,
                         uint64_t sample_seed = 1234) {
  for (auto& p : params) p.zero_grad();
  loss_fn().backward();
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params)
    analytic.push_back(p.grad().data.empty() ? Tensor<double>::zeros(p.value().shape)
                                             : p.grad());

  Rng rng(sample_seed);
  double worst = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& val = params[pi].mutable_value();
    std::vector<std::size_t> coords(val.count());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const auto numeric_at = [&](double h) {
        const double keep = val[i];
        val[i] = keep + h;
        const double lp = loss_fn().value()[0];
        val[i] = keep - h;
        const double lm = loss_fn().value()[0];
        val[i] = keep;
        return (lp - lm) / (2 * h);
      };
      const double a = analytic[pi][i];
      const auto rel_of = [&](double numeric) {
        return std::abs(a - numeric) /
               std::max({std::abs(a), std::abs(numeric), 1e-8});
      };
      double rel = rel_of(numeric_at(eps));
      // Near-zero gradients sit below the roundoff floor of a fine central
      // difference; re-measure such coordinates with coarser steps, where
      // cancellation noise shrinks, and keep the best-conditioned estimate.
      for (double h = eps * 50; rel > 1e-5 && h <= eps * 2500; h *= 50)
        rel = std::min(rel, rel_of(numeric_at(h)));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace tinyloc::nn
