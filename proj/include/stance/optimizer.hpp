#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "stance/autodiff.hpp"
#include "stance/error.hpp"

namespace stance {

/// Linear warmup to `peak` over warmup_fraction * total steps, then linear
/// decay to 0 at `total`.
struct LinearSchedule {
  double peak = 1e-5;
  double warmup_fraction = 0.06;
  std::size_t total_steps = 1;

  double at(std::size_t step) const {
    const double total = static_cast<double>(total_steps);
    const double warm = warmup_fraction * total;
    const double s = static_cast<double>(step);
    if (s >= total) return 0.0;
    if (warm > 0.0 && s < warm) return peak * s / warm;
    const double rest = total - warm;
    return rest > 0.0 ? peak * (total - s) / rest : 0.0;
  }
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-8;
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<ad::Parameter*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& w = params_[k]->value;
      const auto& g = params_[k]->grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.epsilon) + cfg_.weight_decay * w[i]);
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<ad::Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<ad::Matrix> m_, v_;
  std::size_t t_ = 0;
};

inline double global_grad_norm(const std::vector<ad::Parameter*>& params) {
  double s = 0.0;
  for (const auto* p : params) {
    for (double g : p->grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

/// Rescales gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_grad_norm(const std::vector<ad::Parameter*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) {
    const double c = max_norm / norm;
    for (auto* p : params) {
      for (double& g : p->grad.values()) g *= c;
    }
  }
  return norm;
}

}  // namespace stance
