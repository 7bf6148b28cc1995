#pragma once

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "vrn/common.hpp"

namespace vrn {

// Dense row-major tensor. A Tensor is a handle: copying it copies the
// handle, not the storage, and constness is shallow (a const Tensor still
// exposes mutable storage, as backward closures capture handles by value).
// clone() makes a deep copy. The optional grad array always matches the
// value array in shape; `node` is the tensor's id on the active tape (-1
// when the tensor was created outside a recorded op).
template <typename T>
class Tensor {
  struct Impl {
    std::vector<int> shape;
    std::vector<T> val;
    std::vector<T> grad;  // empty until first use
    int node = -1;
  };

 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) {
    p_ = std::make_shared<Impl>();
    long long n = 1;
    for (int e : shape) {
      if (e <= 0)
        throw ConfigError("tensor extent must be positive, got " + std::to_string(e));
      n *= e;
    }
    p_->shape = std::move(shape);
    p_->val.assign(static_cast<size_t>(n), T(0));
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.p_->val.begin(), t.p_->val.end(), v);
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<T> values) {
    Tensor t(std::move(shape));
    if (values.size() != t.p_->val.size())
      throw ConfigError(strfmt("tensor data size %zu does not match shape size %zu",
                               values.size(), t.p_->val.size()));
    t.p_->val = std::move(values);
    return t;
  }

  bool valid() const { return static_cast<bool>(p_); }
  bool same_storage(const Tensor& o) const { return p_ == o.p_; }
  bool defined() const { return static_cast<bool>(p_); }

  const std::vector<int>& shape() const { return p_->shape; }
  int rank() const { return static_cast<int>(p_->shape.size()); }
  int extent(int i) const { return p_->shape[static_cast<size_t>(i)]; }
  long long numel() const { return static_cast<long long>(p_->val.size()); }

  T* data() const { return p_->val.data(); }
  std::vector<T>& values() const { return p_->val; }

  T item() const {
    if (numel() != 1) throw UsageError("item() requires a scalar tensor");
    return p_->val[0];
  }

  bool same_shape(const Tensor& o) const { return p_->shape == o.p_->shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < p_->shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(p_->shape[i]);
    }
    return s + "]";
  }

  // --- gradient storage ---

  bool has_grad() const { return !p_->grad.empty(); }

  // Allocates (zeroed) on first access.
  T* grad() const {
    ensure_grad();
    return p_->grad.data();
  }

  std::vector<T>& grad_vec() const {
    ensure_grad();
    return p_->grad;
  }

  void ensure_grad() const {
    if (p_->grad.empty()) p_->grad.assign(p_->val.size(), T(0));
  }

  void clear_grad() const { p_->grad.clear(); }

  void zero_grad() const {
    if (!p_->grad.empty()) std::fill(p_->grad.begin(), p_->grad.end(), T(0));
  }

  void accum_grad(const T* g, long long n) const {
    ensure_grad();
    for (long long i = 0; i < n; ++i) p_->grad[static_cast<size_t>(i)] += g[i];
  }

  // --- tape linkage ---

  int node() const { return p_->node; }
  void set_node(int id) const { p_->node = id; }

  // Deep copy of values only; no grad, no tape linkage.
  Tensor clone() const {
    Tensor t;
    t.p_ = std::make_shared<Impl>();
    t.p_->shape = p_->shape;
    t.p_->val = p_->val;
    return t;
  }

  void copy_values_from(const Tensor& o) const {
    if (!same_shape(o)) throw UsageError("copy_values_from: shape mismatch");
    p_->val = o.p_->val;
  }

 private:
  std::shared_ptr<Impl> p_;
};

}  // namespace vrn
