#pragma once

#include <cstdint>

namespace vrn {

// Scoped floating-point-operation counter. Ops add to the active counter
// during forward evaluation; convolutions contribute
// 2 * C_in * C_out * prod(kernel) * prod(output spatial), elementwise ops one
// (batchnorm two) per output element. Pure data movement (pool, upsample,
// concat, reshape) contributes nothing.
class FlopCounter {
 public:
  static FlopCounter*& active() {
    thread_local FlopCounter* c = nullptr;
    return c;
  }

  void add(uint64_t n) { total_ += n; }
  uint64_t total() const { return total_; }

 private:
  uint64_t total_ = 0;
};

class FlopScope {
 public:
  FlopScope() : prev_(FlopCounter::active()) { FlopCounter::active() = &counter_; }
  ~FlopScope() { FlopCounter::active() = prev_; }
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;
  uint64_t total() const { return counter_.total(); }

 private:
  FlopCounter counter_;
  FlopCounter* prev_;
};

inline void count_flops(uint64_t n) {
  if (FlopCounter* c = FlopCounter::active()) c->add(n);
}

}  // namespace vrn
