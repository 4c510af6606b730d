#pragma once

#include <cstddef>
#include <vector>

#include "handformer/numerics/kernels.hpp"
#include "handformer/numerics/tape.hpp"

// Differentiable operations over tape variables. Shapes are row-major; an
// operation on "[..., d]" treats all leading axes as one batch axis.
namespace handformer::nn {

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
// y's shape must equal the trailing axes of x; y is broadcast over the rest.
template <typename T>
Var<T> add_trailing(Var<T> x, Var<T> y);
template <typename T>
Var<T> relu(Var<T> x);

// [..., k] x [k, n] -> [..., n]
template <typename T>
Var<T> matmul(Var<T> x, Var<T> w);
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));

// [batch, C_in, L] * [C_out, C_in, k] + [C_out] -> [batch, C_out, L_out]
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> kernels, Var<T> bias, std::size_t stride, std::size_t padding);

// Multi-head scaled dot-product attention over [batch, n, d] operands.
// If `weights_out` is set it receives the [batch, heads, n_q, n_k] weights.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads,
                 const AttentionMask* mask = nullptr, Tensor<T>* weights_out = nullptr);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
template <typename T>
Var<T> permute(Var<T> x, const std::vector<std::size_t>& order);
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end);
// Removes `axis` by averaging over it.
template <typename T>
Var<T> mean_axis(Var<T> x, std::size_t axis);
// Inserts a new axis of extent `count` at `axis`, repeating x along it.
template <typename T>
Var<T> broadcast_axis(Var<T> x, std::size_t axis, std::size_t count);
// rows of a [R, d] table -> [ids.size(), d]
template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<std::size_t>& ids);

// Scalar reductions; results have shape {1}.
template <typename T>
Var<T> sum_all(Var<T> x);
template <typename T>
Var<T> l1_sum(Var<T> x);
// Mean over the batch of -log softmax(logits[b])[targets[b]].
template <typename T>
Var<T> cross_entropy_mean(Var<T> logits, const std::vector<std::size_t>& targets);
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<T>& weights);

// Copies the value onto the tape with no gradient path back to x.
template <typename T>
Var<T> detach(Var<T> x);

}  // namespace handformer::nn
