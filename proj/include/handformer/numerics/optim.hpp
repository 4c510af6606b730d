#pragma once

#include <set>
#include <vector>

#include "handformer/numerics/parameter.hpp"

namespace handformer::nn {

template <typename T>
struct OptimizerState {
  std::vector<Tensor<T>> velocity;  // one per parameter, same order as the ParameterSet
  double lr = 0.025;
  double momentum = 0.9;
  std::set<int> decay_epochs{25, 40};
  double decay_factor = 0.1;
  int last_epoch = -1;  // epoch of the most recent step

  static OptimizerState for_parameters(const ParameterSet<T>& params);
};

// Heavy-ball SGD: v <- momentum * v + grad; value <- value - lr * v.
// The first step of an epoch listed in decay_epochs scales lr by decay_factor
// before any update is applied.
template <typename T>
void sgd_momentum_step(const ParameterSet<T>& params, OptimizerState<T>& state, int epoch);

}  // namespace handformer::nn
