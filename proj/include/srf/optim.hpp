#pragma once

#include <cmath>
#include <vector>

#include "srf/tensor.hpp"

namespace srf {

template <class T>
struct AdamState {
  // First/second moment per parameter, laid out parallel to the param list.
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  uint64_t step = 0;
};

template <class T>
struct AdamConfig {
  T lr = T(5e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// Standard Adam with bias correction. Reads each param's accumulated grad and
// updates its value in place; call zero_grad afterwards per training step.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, const AdamConfig<T>& cfg) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), T(0));
      state.v.emplace_back(p.size(), T(0));
    }
    state.step = 0;
  }
  state.step += 1;
  T bc1 = T(1) - std::pow(cfg.beta1, static_cast<T>(state.step));
  T bc2 = T(1) - std::pow(cfg.beta2, static_cast<T>(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const auto& g = p.grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    auto& val = p.raw_value();
    for (size_t i = 0; i < val.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (T(1) - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (T(1) - cfg.beta2) * g[i] * g[i];
      T mh = m[i] / bc1;
      T vh = v[i] / bc2;
      val[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

}  // namespace srf
