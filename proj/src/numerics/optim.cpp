#include "handformer/numerics/optim.hpp"

namespace handformer::nn {

template <typename T>
OptimizerState<T> OptimizerState<T>::for_parameters(const ParameterSet<T>& params) {
  OptimizerState state;
  for (const Parameter<T>* p : params) state.velocity.emplace_back(p->value.shape());
  return state;
}

template <typename T>
void sgd_momentum_step(const ParameterSet<T>& params, OptimizerState<T>& state, int epoch) {
  require(state.velocity.size() == params.size(), ErrorCode::kShapeMismatch,
          "optimizer state tracks " + std::to_string(state.velocity.size()) +
              " tensors but got " + std::to_string(params.size()) + " parameters");
  if (epoch != state.last_epoch) {
    for (int boundary : state.decay_epochs) {
      if (boundary > state.last_epoch && boundary <= epoch) state.lr *= state.decay_factor;
    }
    state.last_epoch = epoch;
  }
  const T lr = static_cast<T>(state.lr);
  const T momentum = static_cast<T>(state.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    if (!p.trainable) continue;
    Tensor<T>& v = state.velocity[i];
    require(v.shape() == p.value.shape(), ErrorCode::kShapeMismatch,
            "velocity shape mismatch for " + p.name);
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = momentum * v[j] + p.grad[j];
      p.value[j] -= lr * v[j];
    }
  }
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void sgd_momentum_step(const ParameterSet<float>&, OptimizerState<float>&, int);
template void sgd_momentum_step(const ParameterSet<double>&, OptimizerState<double>&, int);

}  // namespace handformer::nn
