#pragma once

#include <string>

#include "handformer/numerics/ops.hpp"
#include "handformer/numerics/rng.hpp"

namespace handformer::nn {

// Uniform in +-sqrt(6 / (fan_in + fan_out)), drawn in double then rounded to T.
template <typename T>
Tensor<T> glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool with_bias = true);

  // [..., in] -> [..., out]
  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(ParameterSet<T>& params);

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }

  Parameter<T> weight;  // [in, out]
  Parameter<T> bias;    // [out], unused without bias
  bool has_bias = true;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(ParameterSet<T>& params);

  Parameter<T> gamma;
  Parameter<T> beta;
};

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng);

  // [batch, C_in, L] -> [batch, C_out, L_out]
  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(ParameterSet<T>& params);
  std::size_t output_length(std::size_t length) const;

  Parameter<T> kernels;  // [C_out, C_in, k]
  Parameter<T> bias;     // [C_out]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Multi-head self-attention with query/key/value/output projections. The key
// projection has no bias: softmax cancels it, so its gradient is always zero.
template <typename T>
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);

  // [batch, n, d] -> [batch, n, d]
  Var<T> forward(Tape<T>& tape, Var<T> x, const AttentionMask* mask = nullptr,
                 Tensor<T>* weights_out = nullptr);
  void collect(ParameterSet<T>& params);

  Linear<T> query, key, value, output;
  std::size_t heads = 1;
};

// d -> hidden -> d with ReLU.
template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(ParameterSet<T>& params);

  Linear<T> expand, contract;
};

// One head per 64 channels, at least one.
std::size_t default_head_count(std::size_t dim);

}  // namespace handformer::nn
