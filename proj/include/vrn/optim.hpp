#pragma once

#include <cmath>
#include <vector>

#include "vrn/common.hpp"
#include "vrn/tensor.hpp"

namespace vrn {

// RMSProp: acc <- rho*acc + (1-rho)*g^2; p <- p - lr*g/(sqrt(acc)+eps).
// Accumulators are keyed by position in the parameter list, which must stay
// stable across steps. Learning-rate scheduling belongs to the caller.
template <typename T>
struct OptimizerState {
  T lr = T(1e-4);
  T rho = T(0.99);
  T eps = T(1e-8);
  std::vector<std::vector<T>> acc;
};

template <typename T>
void rmsprop_step(const std::vector<Tensor<T>>& params, OptimizerState<T>& state) {
  if (state.acc.empty()) {
    state.acc.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i)
      state.acc[i].assign((size_t)params[i].numel(), T(0));
  }
  if (state.acc.size() != params.size())
    throw UsageError(strfmt("rmsprop_step: %zu accumulators for %zu parameters",
                            state.acc.size(), params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& p = params[i];
    if ((long long)state.acc[i].size() != p.numel())
      throw UsageError(strfmt("rmsprop_step: parameter %zu changed size", i));
    if (!p.has_grad()) continue;
    T* v = p.data();
    const T* g = p.grad();
    T* a = state.acc[i].data();
    const long long n = p.numel();
    for (long long j = 0; j < n; ++j) {
      a[j] = state.rho * a[j] + (T(1) - state.rho) * g[j] * g[j];
      v[j] -= state.lr * g[j] / (std::sqrt(a[j]) + state.eps);
    }
  }
}

}  // namespace vrn
