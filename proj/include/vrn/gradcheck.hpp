#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vrn/rng.hpp"
#include "vrn/tape.hpp"
#include "vrn/tensor.hpp"

namespace vrn {

template <typename T>
struct FdOptions {
  T step = T(1e-3);
  T tol = T(1e-3);
  // Cap on checked elements per tensor (<0 checks all), subsampled by seed.
  long long max_per_tensor = -1;
  uint64_t seed = 1;
};

template <typename T>
struct FdReport {
  T max_rel_err = 0;
  long long checked = 0;
  bool passed = true;
};

// Central-difference gradient check. `forward` must rebuild the computation
// from the current values of `wrt` on every call and return a scalar tensor.
// Relative error is |analytic - fd| / max(|analytic| + |fd|, 1e-2), the
// denominator floor absorbing finite-difference noise on near-zero slopes.
template <typename T, typename F>
FdReport<T> check_gradients(F&& forward, const std::vector<Tensor<T>>& wrt,
                            FdOptions<T> opt = {}) {
  std::vector<std::vector<T>> analytic(wrt.size());
  {
    typename Tape<T>::Scope scope;
    Tensor<T> loss = forward();
    scope.tape().backward(loss);
    for (size_t i = 0; i < wrt.size(); ++i) {
      analytic[i].assign((size_t)wrt[i].numel(), T(0));
      if (wrt[i].has_grad())
        std::copy(wrt[i].grad(), wrt[i].grad() + wrt[i].numel(),
                  analytic[i].begin());
    }
  }
  for (const Tensor<T>& t : wrt) t.clear_grad();

  Rng rng(opt.seed);
  FdReport<T> rep;
  for (size_t i = 0; i < wrt.size(); ++i) {
    const long long n = wrt[i].numel();
    std::vector<long long> idx(n);
    for (long long j = 0; j < n; ++j) idx[j] = j;
    long long take = n;
    if (opt.max_per_tensor >= 0 && opt.max_per_tensor < n) {
      take = opt.max_per_tensor;
      for (long long j = 0; j < take; ++j)
        std::swap(idx[j], idx[rng.uniform_int((int)j, (int)(n - 1))]);
    }
    for (long long j = 0; j < take; ++j) {
      T* slot = wrt[i].data() + idx[j];
      const T saved = *slot;
      *slot = saved + opt.step;
      const T up = forward().item();
      *slot = saved - opt.step;
      const T dn = forward().item();
      *slot = saved;
      const T fd = (up - dn) / (2 * opt.step);
      const T a = analytic[i][idx[j]];
      const T rel = std::abs(a - fd) /
                    std::max(std::abs(a) + std::abs(fd), T(1e-2));
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      ++rep.checked;
    }
  }
  rep.passed = rep.max_rel_err < opt.tol;
  return rep;
}

}  // namespace vrn
