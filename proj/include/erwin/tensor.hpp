// Copyright (c) 2026 erwin-cpp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "erwin/common.hpp"

namespace erwin {

// Abstract operation counter. When enabled, numeric kernels add their
// arithmetic op counts here; the benchmark harness uses the total as a
// machine-independent runtime proxy.
namespace cost {

inline std::atomic<unsigned long long>& counter() {
  static std::atomic<unsigned long long> c{0};
  return c;
}
inline bool& enabled() {
  static bool e = false;
  return e;
}
inline void add(u64 ops) {
  if (enabled()) counter().fetch_add(ops, std::memory_order_relaxed);
}
inline void reset() { counter().store(0); }
inline u64 total() { return counter().load(); }

struct ScopedEnable {
  bool prev;
  ScopedEnable() : prev(enabled()) { enabled() = true; }
  ~ScopedEnable() { enabled() = prev; }
};

}  // namespace cost

template <typename S>
class Tape;

inline std::string shape_str(const std::vector<i64>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s + "]";
}

// Dense row-major tensor handle. Storage is shared; tensors are treated as
// immutable once produced by an op. A tensor is either a constant
// (tape == nullptr) or recorded on a tape with node id >= 0.
template <typename S>
struct Tensor {
  std::vector<i64> shape;
  std::shared_ptr<std::vector<S>> data;
  Tape<S>* tape = nullptr;
  int node = -1;

  Tensor() = default;

  i64 numel() const {
    i64 n = 1;
    for (i64 d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }
  int ndim() const { return static_cast<int>(shape.size()); }
  i64 dim(int i) const { return shape[static_cast<size_t>(i)]; }
  S* ptr() { return data->data(); }
  const S* ptr() const { return data->data(); }
  S& operator[](i64 i) { return (*data)[static_cast<size_t>(i)]; }
  S operator[](i64 i) const { return (*data)[static_cast<size_t>(i)]; }

  static Tensor zeros(std::vector<i64> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<S>>(static_cast<size_t>(t.numel()), S(0));
    return t;
  }
  static Tensor full(std::vector<i64> shape, S value) {
    Tensor t = zeros(std::move(shape));
    for (S& v : *t.data) v = value;
    return t;
  }
  static Tensor from_values(std::vector<i64> shape, std::vector<S> values) {
    Tensor t;
    t.shape = std::move(shape);
    if (static_cast<i64>(values.size()) != t.numel())
      throw ShapeError("from_values: " + std::to_string(values.size()) + " values for shape " + shape_str(t.shape));
    t.data = std::make_shared<std::vector<S>>(std::move(values));
    return t;
  }
};

template <typename S>
Tensor<S> to_tensor(const Matrix& m) {
  Tensor<S> t = Tensor<S>::zeros({m.rows, m.cols});
  for (size_t i = 0; i < m.data.size(); ++i) (*t.data)[i] = static_cast<S>(m.data[i]);
  return t;
}

template <typename S>
Matrix to_matrix(const Tensor<S>& t) {
  if (t.ndim() != 2) throw ShapeError("to_matrix expects 2-d tensor, got " + shape_str(t.shape));
  Matrix m(t.dim(0), t.dim(1));
  for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<double>((*t.data)[i]);
  return m;
}

// Reverse-mode tape. Ops record one node each; backward() runs one reverse
// sweep and then freezes the tape. Gradients accumulate additively across
// fan-out. One forward/backward pair per tape; build a fresh tape per step.
template <typename S>
class Tape {
 public:
  Tensor<S> leaf(const Tensor<S>& value) {
    Tensor<S> out = value;
    out.tape = this;
    out.node = record({}, value.shape, {});
    return out;
  }

  int record(std::vector<int> parents, std::vector<i64> shape, std::function<void(Tape&, int)> pull) {
    if (ran_backward_) throw Error("tape already consumed by backward; record on a fresh tape");
    Node node;
    node.parents = std::move(parents);
    node.shape = std::move(shape);
    node.pull = std::move(pull);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void backward(const Tensor<S>& loss) {
    if (ran_backward_) throw Error("backward called twice on the same tape");
    if (loss.tape != this || loss.node < 0) throw ArgError("backward: loss is not recorded on this tape");
    if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape));
    grad_buf(loss.node)[0] = S(1);
    for (int id = loss.node; id >= 0; --id) {
      Node& node = nodes_[static_cast<size_t>(id)];
      if (node.grad.empty() || !node.pull) continue;
      node.pull(*this, id);
    }
    ran_backward_ = true;
  }

  // Gradient buffer of a recorded tensor; zeros when the tensor did not
  // influence the loss. Valid only after backward().
  const std::vector<S>& grad(const Tensor<S>& t) {
    if (t.tape != this || t.node < 0) throw ArgError("grad: tensor is not recorded on this tape");
    if (!ran_backward_) throw Error("grad queried before backward");
    return grad_buf(t.node);
  }

  std::vector<S>& grad_buf(int id) {
    Node& node = nodes_[static_cast<size_t>(id)];
    if (node.grad.empty()) {
      i64 n = 1;
      for (i64 d : node.shape) n *= d;
      node.grad.assign(static_cast<size_t>(n), S(0));
    }
    return node.grad;
  }

  const std::vector<i64>& node_shape(int id) const { return nodes_[static_cast<size_t>(id)].shape; }
  bool consumed() const { return ran_backward_; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> parents;
    std::vector<i64> shape;
    std::vector<S> grad;
    std::function<void(Tape&, int)> pull;
  };
  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// Result tape for an op over possibly mixed constant/recorded operands.
template <typename S>
Tape<S>* merge_tapes(std::initializer_list<const Tensor<S>*> operands) {
  Tape<S>* tape = nullptr;
  for (const Tensor<S>* t : operands) {
    if (!t->tape) continue;
    if (tape && tape != t->tape) throw ArgError("operands recorded on different tapes");
    tape = t->tape;
  }
  return tape;
}

}  // namespace erwin
