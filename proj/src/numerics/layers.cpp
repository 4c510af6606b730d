#include "handformer/numerics/layers.hpp"

#include <cmath>

namespace handformer::nn {

std::size_t default_head_count(std::size_t dim) {
  const std::size_t heads = dim / 64;
  return heads == 0 ? 1 : heads;
}

template <typename T>
Tensor<T> glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> out(shape);
  for (T& v : out.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return out;
}

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                  bool with_bias)
    : weight(name + ".weight", glorot_uniform<T>({in, out}, in, out, rng)),
      has_bias(with_bias) {
  if (has_bias) bias = Parameter<T>(name + ".bias", Tensor<T>({out}));
}

template <typename T>
Var<T> Linear<T>::forward(Tape<T>& tape, Var<T> x) {
  Var<T> y = matmul(x, tape.parameter(weight));
  return has_bias ? add_trailing(y, tape.parameter(bias)) : y;
}

template <typename T>
void Linear<T>::collect(ParameterSet<T>& params) {
  params.push_back(&weight);
  if (has_bias) params.push_back(&bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, std::size_t dim)
    : gamma(name + ".gamma", Tensor<T>({dim}, T{1})), beta(name + ".beta", Tensor<T>({dim})) {}

template <typename T>
Var<T> LayerNorm<T>::forward(Tape<T>& tape, Var<T> x) {
  return layer_norm(x, tape.parameter(gamma), tape.parameter(beta));
}

template <typename T>
void LayerNorm<T>::collect(ParameterSet<T>& params) {
  params.push_back(&gamma);
  params.push_back(&beta);
}

template <typename T>
Conv1d<T>::Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t stride_in, std::size_t padding_in, Rng& rng)
    : kernels(name + ".kernels",
              glorot_uniform<T>({out_channels, in_channels, kernel}, in_channels * kernel,
                                out_channels * kernel, rng)),
      bias(name + ".bias", Tensor<T>({out_channels})),
      stride(stride_in),
      padding(padding_in) {}

template <typename T>
Var<T> Conv1d<T>::forward(Tape<T>& tape, Var<T> x) {
  return conv1d(x, tape.parameter(kernels), tape.parameter(bias), stride, padding);
}

template <typename T>
void Conv1d<T>::collect(ParameterSet<T>& params) {
  params.push_back(&kernels);
  params.push_back(&bias);
}

template <typename T>
std::size_t Conv1d<T>::output_length(std::size_t length) const {
  return conv_output_length(length, kernels.value.dim(2), stride, padding);
}

template <typename T>
SelfAttention<T>::SelfAttention(const std::string& name, std::size_t dim, std::size_t heads_in,
                                Rng& rng)
    : query(name + ".query", dim, dim, rng),
      key(name + ".key", dim, dim, rng, false),
      value(name + ".value", dim, dim, rng),
      output(name + ".output", dim, dim, rng),
      heads(heads_in) {
  require(heads > 0 && dim % heads == 0, ErrorCode::kInvalidArgument,
          name + ": width " + std::to_string(dim) + " not divisible into " +
              std::to_string(heads) + " heads");
}

template <typename T>
Var<T> SelfAttention<T>::forward(Tape<T>& tape, Var<T> x, const AttentionMask* mask,
                                 Tensor<T>* weights_out) {
  Var<T> q = query.forward(tape, x);
  Var<T> k = key.forward(tape, x);
  Var<T> v = value.forward(tape, x);
  return output.forward(tape, attention(q, k, v, heads, mask, weights_out));
}

template <typename T>
void SelfAttention<T>::collect(ParameterSet<T>& params) {
  query.collect(params);
  key.collect(params);
  value.collect(params);
  output.collect(params);
}

template <typename T>
FeedForward<T>::FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng)
    : expand(name + ".expand", dim, hidden, rng), contract(name + ".contract", hidden, dim, rng) {}

template <typename T>
Var<T> FeedForward<T>::forward(Tape<T>& tape, Var<T> x) {
  return contract.forward(tape, relu(expand.forward(tape, x)));
}

template <typename T>
void FeedForward<T>::collect(ParameterSet<T>& params) {
  expand.collect(params);
  contract.collect(params);
}

template Tensor<float> glorot_uniform<float>(const Shape&, std::size_t, std::size_t, Rng&);
template Tensor<double> glorot_uniform<double>(const Shape&, std::size_t, std::size_t, Rng&);
template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class Conv1d<float>;
template class Conv1d<double>;
template class SelfAttention<float>;
template class SelfAttention<double>;
template class FeedForward<float>;
template class FeedForward<double>;

}  // namespace handformer::nn
