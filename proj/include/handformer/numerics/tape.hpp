#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "handformer/numerics/parameter.hpp"
#include "handformer/numerics/tensor.hpp"

namespace handformer::nn {

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
};

// Linear record of a forward computation; backward() replays it in reverse.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Var<T> constant(Tensor<T> value);
  // A trainable parameter becomes a differentiable leaf whose gradient is
  // added to `param.grad` by backward(); a frozen one is a constant.
  Var<T> parameter(Parameter<T>& param);
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, Backward backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  // Gradient buffer of node `id`, zero-allocated on first access.
  Tensor<T>& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(root)/d(root) = 1; root must hold a single element.
  void backward(Var<T> root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    Backward backward;
    Parameter<T>* param = nullptr;
  };

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace handformer::nn
