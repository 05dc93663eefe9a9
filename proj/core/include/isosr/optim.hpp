#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "isosr/error.hpp"
#include "isosr/tensor.hpp"

namespace isosr {

// Step-wise square-root decay: alpha(t) = alpha_init / sqrt(1 + floor(t/T)).
struct LrSchedule {
  double alpha_init = 1e-4;
  std::int64_t decay_steps = 50000;

  double at(std::int64_t t) const {
    if (decay_steps < 1) throw UsageError("lr decay_steps must be >= 1");
    return alpha_init / std::sqrt(1.0 + static_cast<double>(t / decay_steps));
  }
};

// Adam with bias correction. Moment tensors are owned here, one pair per
// parameter, in parameter-table order.
template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  static AdamState init(const std::vector<Tensor<T>>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.push_back(Tensor<T>::zeros(p.shape()));
      s.v.push_back(Tensor<T>::zeros(p.shape()));
    }
    return s;
  }
};

// One optimizer step: m,v updates plus bias-corrected parameter update.
// Non-finite gradients abort with the offending parameter's name.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               const std::vector<std::string>& names, AdamState<T>& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].shape() != grads[p].shape()) {
      throw ShapeError("adam_step: gradient shape mismatch for " + (p < names.size() ? names[p] : std::to_string(p)));
    }
    auto& mp = state.m[p];
    auto& vp = state.v[p];
    auto& par = params[p];
    const auto& g = grads[p];
    for (i64 i = 0; i < par.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      if (!std::isfinite(gi)) {
        throw NumericError("adam_step: non-finite gradient in " + (p < names.size() ? names[p] : std::to_string(p)));
      }
      const double mi = state.beta1 * static_cast<double>(mp[i]) + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * static_cast<double>(vp[i]) + (1.0 - state.beta2) * gi * gi;
      mp[i] = static_cast<T>(mi);
      vp[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      par[i] = static_cast<T>(static_cast<double>(par[i]) - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace isosr
