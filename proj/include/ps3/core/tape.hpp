#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "ps3/core/tensor.hpp"

namespace ps3 {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
// tape is alive.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  bool valid() const { return tape != nullptr; }
  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape; }
  std::size_t size() const { return tape->value(id).size(); }
};

// Ordered record of primitive operations. Every record's inputs precede it,
// so the reverse sweep in backward() is a valid topological order.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    Record r;
    r.value = std::move(value);
    r.requires_grad = requires_grad && grad_enabled_;
    records_.push_back(std::move(r));
    return Var<T>{this, records_.size() - 1};
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Records an op output. The backward function runs only if any input
  // participates in differentiation.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn) {
    Record r;
    r.value = std::move(value);
    bool needs = false;
    if (grad_enabled_) {
      for (std::size_t in : inputs) {
        if (records_.at(in).requires_grad) needs = true;
      }
    }
    r.requires_grad = needs;
    if (needs) {
      r.inputs = std::move(inputs);
      r.backward = std::move(fn);
    }
    records_.push_back(std::move(r));
    return Var<T>{this, records_.size() - 1};
  }

  const Tensor<T>& value(std::size_t id) const { return records_.at(id).value; }
  bool requires_grad(std::size_t id) const { return records_.at(id).requires_grad; }
  std::size_t size() const { return records_.size(); }

  // Gradient slot, allocated on first access.
  Tensor<T>& grad(std::size_t id) {
    Record& r = records_[id];
    if (!r.grad) r.grad = std::make_unique<Tensor<T>>(r.value.shape, T(0));
    return *r.grad;
  }

  // nullptr when the record never received a gradient.
  const Tensor<T>* grad_of(const Var<T>& v) const { return records_.at(v.id).grad.get(); }

  // Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse.
  void backward(const Var<T>& root) {
    if (backward_done_) throw ArgumentError("tape: backward already ran");
    if (root.tape != this) throw ArgumentError("tape: root from another tape");
    if (value(root.id).size() != 1) throw DimensionError("tape: backward root must be scalar");
    backward_done_ = true;
    if (!records_[root.id].requires_grad) return;
    grad(root.id).values[0] = T(1);
    visited_ = 0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      ++visited_;
      Record& r = records_[i];
      if (!r.requires_grad || !r.grad || !r.backward) continue;
      r.backward(*this, i);
    }
  }

  // Records visited by the last backward sweep.
  std::size_t visited() const { return visited_; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return records_.at(id).inputs; }

 private:
  struct Record {
    Tensor<T> value;
    std::unique_ptr<Tensor<T>> grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  bool grad_enabled_;
  bool backward_done_ = false;
  std::size_t visited_ = 0;
  // deque keeps value references stable while the tape grows.
  std::deque<Record> records_;
};

}  // namespace ps3
