#pragma once

#include <string>
#include <vector>

#include "handformer/numerics/tensor.hpp"

namespace handformer::nn {

template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string name_in, Tensor<T> value_in, bool trainable_in = true)
      : name(std::move(name_in)),
        value(std::move(value_in)),
        grad(value.shape()),
        trainable(trainable_in) {}

  void zero_grad() { grad.fill(T{0}); }

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

// Non-owning, ordered view over a model's parameters.
template <typename T>
using ParameterSet = std::vector<Parameter<T>*>;

template <typename T>
void zero_grads(const ParameterSet<T>& params) {
  for (Parameter<T>* p : params) p->zero_grad();
}

template <typename T>
std::size_t parameter_count(const ParameterSet<T>& params) {
  std::size_t n = 0;
  for (const Parameter<T>* p : params) n += p->value.size();
  return n;
}

}  // namespace handformer::nn
