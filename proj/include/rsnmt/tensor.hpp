#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "rsnmt/common.hpp"

namespace rsnmt {

// Dense row-major tensor. `grad` stays empty until something accumulates into
// it; when present it has the same length as `data`.
template <class T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, std::vector<T> d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    if (numel_of(shape) != static_cast<int64_t>(data.size())) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
    }
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d <= 0) throw ShapeError("tensor: non-positive dimension in shape " + shape_str(s));
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  int64_t dim(int64_t i) const {
    if (i < 0) i += rank();
    return shape[static_cast<size_t>(i)];
  }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { grad.clear(); }
  bool has_grad() const { return !grad.empty(); }
};

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <class T>
TensorPtr<T> tensor(std::vector<int64_t> shape, std::vector<T> data, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), std::move(data), requires_grad);
}

template <class T>
TensorPtr<T> zeros(std::vector<int64_t> shape, bool requires_grad = false) {
  int64_t n = Tensor<T>::numel_of(shape);
  return tensor<T>(std::move(shape), std::vector<T>(static_cast<size_t>(n), T(0)), requires_grad);
}

template <class T>
TensorPtr<T> full(std::vector<int64_t> shape, T value, bool requires_grad = false) {
  int64_t n = Tensor<T>::numel_of(shape);
  return tensor<T>(std::move(shape), std::vector<T>(static_cast<size_t>(n), value), requires_grad);
}

template <class T>
TensorPtr<T> uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi,
                     bool requires_grad = false) {
  int64_t n = Tensor<T>::numel_of(shape);
  std::vector<T> d(static_cast<size_t>(n));
  for (auto& v : d) v = static_cast<T>(rng.uniform(lo, hi));
  return tensor<T>(std::move(shape), std::move(d), requires_grad);
}

template <class T>
T value(const TensorPtr<T>& t) {
  if (t->numel() != 1) throw ShapeError("value: tensor is not scalar, shape " + shape_str(t->shape));
  return t->data[0];
}

// Define-by-run gradient tape. Each forward op that needs a gradient records
// one backward closure; closures run in reverse order and ADD into input
// grads. The additive rule is what makes a tensor consumed k times end up
// with the sum of its k per-use gradients.
template <class T>
class Tape {
 public:
  void record(std::function<void()> fn, const void* produced) {
    steps_.push_back(std::move(fn));
    outputs_.insert(produced);
  }

  bool on_tape(const void* t) const { return outputs_.count(t) != 0; }
  size_t size() const { return steps_.size(); }

  void backward(const TensorPtr<T>& loss) {
    if (loss->numel() != 1) {
      throw GraphError("backward: loss must be scalar, got shape " + shape_str(loss->shape));
    }
    if (!on_tape(loss.get())) {
      throw GraphError("backward: loss tensor was not produced on this tape");
    }
    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> steps_;
  std::unordered_set<const void*> outputs_;
};

}  // namespace rsnmt
