#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "handformer/numerics/tensor.hpp"

namespace handformer::nn {

// Boolean [rows x cols] matrix; true marks a key a query may attend to.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t rows, std::size_t cols, bool fill = true)
      : rows_(rows), cols_(cols), allowed_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool allowed(std::size_t r, std::size_t c) const { return allowed_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool value) { allowed_[r * cols_ + c] = value ? 1 : 0; }
  std::size_t row_count(std::size_t r) const;

  // Throws "degenerate attention row" if some row has no allowed key.
  void validate() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> allowed_;
};

template <typename T>
struct AttentionResult {
  Tensor<T> output;   // [n_q x d_h]
  Tensor<T> weights;  // [n_q x n_k], masked entries exactly 0
};

// Single-head scaled dot-product attention.
template <typename T>
AttentionResult<T> softmax_attention(const Tensor<T>& queries, const Tensor<T>& keys,
                                     const Tensor<T>& values_in,
                                     const std::optional<AttentionMask>& mask = std::nullopt);

// Direct 1-D convolution of one [C_in x L] signal with [C_out x C_in x k] kernels.
template <typename T>
Tensor<T> temporal_conv1d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                          std::size_t stride, std::size_t padding);

// -log softmax(logits)[target].
template <typename T>
T cross_entropy(const Tensor<T>& logits, std::size_t target);

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

namespace kernels {

// Row-major GEMM helpers; `accumulate` adds into C instead of overwriting.
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);

struct ConvGeometry {
  std::size_t batch, in_channels, length, out_channels, kernel, stride, padding, out_length;
};

ConvGeometry conv_geometry(const Shape& input, const Shape& weights, std::size_t stride,
                           std::size_t padding);

template <typename T>
void conv1d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* out);

// Accumulates into dx, dw, db (any may be null).
template <typename T>
void conv1d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dout, T* dx, T* dw,
                     T* db);

struct AttentionGeometry {
  std::size_t batch, queries, keys, dim, heads;
  std::size_t head_dim() const { return dim / heads; }
};

// q [batch, queries, dim], k/v [batch, keys, dim]; weights [batch, heads, queries, keys].
template <typename T>
void attention_forward(const AttentionGeometry& g, const T* q, const T* k, const T* v,
                       const AttentionMask* mask, T* out, T* weights);

template <typename T>
void attention_backward(const AttentionGeometry& g, const T* q, const T* k, const T* v,
                        const T* weights, const T* dout, const AttentionMask* mask, T* dq, T* dk,
                        T* dv);

}  // namespace kernels
}  // namespace handformer::nn
