#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "vrn/common.hpp"
#include "vrn/tensor.hpp"

namespace vrn {

// Reverse-mode tape. Operations append records in execution order, which is
// a topological order by construction; backward() replays them once, in
// reverse. Tapes are per-thread: ops record onto the tape activated on the
// calling thread, so independent network instances can run on separate
// threads without sharing state.
template <typename T>
class Tape {
 public:
  struct Record {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;  // accumulates into inputs' grads
  };

  static Tape*& active() {
    thread_local Tape* t = nullptr;
    return t;
  }

  // RAII activation for the scope of one forward+backward pass.
  class Scope {
   public:
    Scope() : prev_(active()) { active() = &tape_; }
    ~Scope() { active() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
    Tape& tape() { return tape_; }

   private:
    Tape tape_;
    Tape* prev_;
  };

  int record(std::vector<Tensor<T>> inputs, Tensor<T> output, std::function<void()> backward) {
    int id = static_cast<int>(recs_.size());
    output.set_node(id);
    recs_.push_back(Record{std::move(inputs), std::move(output), std::move(backward)});
    return id;
  }

  size_t size() const { return recs_.size(); }

  void clear() { recs_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. Records whose output never
  // received a gradient are skipped; leaves not reached keep zero grads.
  void backward(Tensor<T> loss) {
    if (loss.numel() != 1) throw UsageError("backward: loss must be scalar, got " + loss.shape_str());
    int id = loss.node();
    if (id < 0 || id >= static_cast<int>(recs_.size()) || !recs_[static_cast<size_t>(id)].output.same_storage(loss))
      throw UsageError("backward: loss is not an output recorded on this tape");
    loss.grad()[0] = T(1);
    for (size_t i = recs_.size(); i-- > 0;) {
      Record& r = recs_[i];
      if (!r.output.has_grad()) continue;
      if (r.backward) r.backward();
    }
  }

 private:
  std::vector<Record> recs_;
};

// Helper used by op implementations: record onto the active tape, if any.
template <typename T>
inline void maybe_record(std::vector<Tensor<T>> inputs, const Tensor<T>& output,
                         std::function<void()> backward) {
  Tape<T>* t = Tape<T>::active();
  if (t) t->record(std::move(inputs), output, std::move(backward));
}

}  // namespace vrn
