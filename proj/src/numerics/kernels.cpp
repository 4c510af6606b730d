#include "handformer/numerics/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace handformer::nn {

std::size_t AttentionMask::row_count(std::size_t r) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < cols_; ++c) n += allowed_[r * cols_ + c];
  return n;
}

void AttentionMask::validate() const {
  for (std::size_t r = 0; r < rows_; ++r) {
    if (row_count(r) == 0) fail(ErrorCode::kDegenerate, "degenerate attention row");
  }
}

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  require(stride > 0, ErrorCode::kInvalidArgument, "convolution stride must be positive");
  require(length + 2 * padding >= kernel, ErrorCode::kInvalidArgument,
          "kernel of length " + std::to_string(kernel) + " is longer than padded input of length " +
              std::to_string(length + 2 * padding));
  return (length + 2 * padding - kernel) / stride + 1;
}

namespace kernels {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  ConstMap<T> A(a, m, k);
  ConstMap<T> B(b, k, n);
  MutMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B;
  } else {
    C.noalias() = A * B;
  }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  ConstMap<T> A(a, m, k);
  ConstMap<T> B(b, n, k);
  MutMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() = A * B.transpose();
  }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
  ConstMap<T> A(a, k, m);
  ConstMap<T> B(b, k, n);
  MutMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() = A.transpose() * B;
  }
}

ConvGeometry conv_geometry(const Shape& input, const Shape& weights, std::size_t stride,
                           std::size_t padding) {
  require(input.size() == 3, ErrorCode::kShapeMismatch,
          "conv1d input must be [batch, channels, length], got " + shape_string(input));
  require(weights.size() == 3, ErrorCode::kShapeMismatch,
          "conv1d kernels must be [out, in, k], got " + shape_string(weights));
  require(weights[1] == input[1], ErrorCode::kShapeMismatch,
          "conv1d channel mismatch: input " + shape_string(input) + " kernels " +
              shape_string(weights));
  ConvGeometry g{};
  g.batch = input[0];
  g.in_channels = input[1];
  g.length = input[2];
  g.out_channels = weights[0];
  g.kernel = weights[2];
  g.stride = stride;
  g.padding = padding;
  g.out_length = conv_output_length(g.length, g.kernel, stride, padding);
  return g;
}

namespace {

// cols: [batch * out_length, in_channels * kernel]
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t width = g.in_channels * g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t t = 0; t < g.out_length; ++t) {
      T* row = cols + (b * g.out_length + t) * width;
      const std::ptrdiff_t start =
          static_cast<std::ptrdiff_t>(t * g.stride) - static_cast<std::ptrdiff_t>(g.padding);
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        const T* signal = x + (b * g.in_channels + c) * g.length;
        for (std::size_t j = 0; j < g.kernel; ++j) {
          const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
          row[c * g.kernel + j] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.length))
                                      ? signal[pos]
                                      : T{0};
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
  const std::size_t width = g.in_channels * g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t t = 0; t < g.out_length; ++t) {
      const T* row = cols + (b * g.out_length + t) * width;
      const std::ptrdiff_t start =
          static_cast<std::ptrdiff_t>(t * g.stride) - static_cast<std::ptrdiff_t>(g.padding);
      for (std::size_t c = 0; c < g.in_channels; ++c) {
        T* signal = dx + (b * g.in_channels + c) * g.length;
        for (std::size_t j = 0; j < g.kernel; ++j) {
          const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.length)) {
            signal[pos] += row[c * g.kernel + j];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv1d_forward(const ConvGeometry& g, const T* x, const T* w, const T* b, T* out) {
  const std::size_t rows = g.batch * g.out_length;
  const std::size_t width = g.in_channels * g.kernel;
  std::vector<T> cols(rows * width);
  im2col(g, x, cols.data());
  std::vector<T> product(rows * g.out_channels);
  matmul_nt(cols.data(), w, product.data(), rows, width, g.out_channels, false);
  for (std::size_t bi = 0; bi < g.batch; ++bi) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const T bias = b ? b[o] : T{0};
      T* dst = out + (bi * g.out_channels + o) * g.out_length;
      for (std::size_t t = 0; t < g.out_length; ++t) {
        dst[t] = product[(bi * g.out_length + t) * g.out_channels + o] + bias;
      }
    }
  }
}

template <typename T>
void conv1d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dout, T* dx, T* dw,
                     T* db) {
  const std::size_t rows = g.batch * g.out_length;
  const std::size_t width = g.in_channels * g.kernel;
  // dout as [rows, out_channels]
  std::vector<T> grad(rows * g.out_channels);
  for (std::size_t bi = 0; bi < g.batch; ++bi) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const T* src = dout + (bi * g.out_channels + o) * g.out_length;
      for (std::size_t t = 0; t < g.out_length; ++t) {
        grad[(bi * g.out_length + t) * g.out_channels + o] = src[t];
      }
    }
  }
  if (db) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < g.out_channels; ++o) db[o] += grad[r * g.out_channels + o];
    }
  }
  if (dw) {
    std::vector<T> cols(rows * width);
    im2col(g, x, cols.data());
    matmul_tn(grad.data(), cols.data(), dw, g.out_channels, rows, width, true);
  }
  if (dx) {
    std::vector<T> dcols(rows * width);
    matmul_nn(grad.data(), w, dcols.data(), rows, g.out_channels, width, false);
    col2im_add(g, dcols.data(), dx);
  }
}

template <typename T>
void attention_forward(const AttentionGeometry& g, const T* q, const T* k, const T* v,
                       const AttentionMask* mask, T* out, T* weights) {
  const std::size_t hd = g.head_dim();
  const T scale = T{1} / std::sqrt(static_cast<T>(hd));
  std::vector<T> logits(g.keys);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* qb = q + b * g.queries * g.dim;
    const T* kb = k + b * g.keys * g.dim;
    const T* vb = v + b * g.keys * g.dim;
    T* ob = out + b * g.queries * g.dim;
    for (std::size_t h = 0; h < g.heads; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t i = 0; i < g.queries; ++i) {
        T* w = weights + ((b * g.heads + h) * g.queries + i) * g.keys;
        const T* qi = qb + i * g.dim + off;
        T max_logit = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < g.keys; ++j) {
          if (mask && !mask->allowed(i, j)) continue;
          const T* kj = kb + j * g.dim + off;
          T dot = 0;
          for (std::size_t c = 0; c < hd; ++c) dot += qi[c] * kj[c];
          logits[j] = dot * scale;
          max_logit = std::max(max_logit, logits[j]);
        }
        T total = 0;
        for (std::size_t j = 0; j < g.keys; ++j) {
          if (mask && !mask->allowed(i, j)) {
            w[j] = T{0};
            continue;
          }
          w[j] = std::exp(logits[j] - max_logit);
          total += w[j];
        }
        T* oi = ob + i * g.dim + off;
        std::fill(oi, oi + hd, T{0});
        for (std::size_t j = 0; j < g.keys; ++j) {
          if (mask && !mask->allowed(i, j)) continue;
          w[j] /= total;
          const T* vj = vb + j * g.dim + off;
          for (std::size_t c = 0; c < hd; ++c) oi[c] += w[j] * vj[c];
        }
      }
    }
  }
}

template <typename T>
void attention_backward(const AttentionGeometry& g, const T* q, const T* k, const T* v,
                        const T* weights, const T* dout, const AttentionMask* mask, T* dq, T* dk,
                        T* dv) {
  const std::size_t hd = g.head_dim();
  const T scale = T{1} / std::sqrt(static_cast<T>(hd));
  std::vector<T> dp(g.keys);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const std::size_t qoff = b * g.queries * g.dim;
    const std::size_t koff = b * g.keys * g.dim;
    for (std::size_t h = 0; h < g.heads; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t i = 0; i < g.queries; ++i) {
        const T* w = weights + ((b * g.heads + h) * g.queries + i) * g.keys;
        const T* doi = dout + qoff + i * g.dim + off;
        T weighted = 0;
        for (std::size_t j = 0; j < g.keys; ++j) {
          if (mask && !mask->allowed(i, j)) continue;
          const T* vj = v + koff + j * g.dim + off;
          T dot = 0;
          for (std::size_t c = 0; c < hd; ++c) dot += doi[c] * vj[c];
          dp[j] = dot;
          weighted += w[j] * dot;
          if (dv) {
            T* dvj = dv + koff + j * g.dim + off;
            for (std::size_t c = 0; c < hd; ++c) dvj[c] += w[j] * doi[c];
          }
        }
        const T* qi = q + qoff + i * g.dim + off;
        T* dqi = dq ? dq + qoff + i * g.dim + off : nullptr;
        for (std::size_t j = 0; j < g.keys; ++j) {
          if (mask && !mask->allowed(i, j)) continue;
          const T ds = w[j] * (dp[j] - weighted) * scale;
          const T* kj = k + koff + j * g.dim + off;
          if (dqi) {
            for (std::size_t c = 0; c < hd; ++c) dqi[c] += ds * kj[c];
          }
          if (dk) {
            T* dkj = dk + koff + j * g.dim + off;
            for (std::size_t c = 0; c < hd; ++c) dkj[c] += ds * qi[c];
          }
        }
      }
    }
  }
}

#define HANDFORMER_INSTANTIATE_KERNELS(T)                                                     \
  template void matmul_nn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                             bool);                                                         \
  template void matmul_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                             bool);                                                         \
  template void matmul_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                             bool);                                                         \
  template void conv1d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);   \
  template void conv1d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*,   \
                                   T*, T*);                                                 \
  template void attention_forward<T>(const AttentionGeometry&, const T*, const T*, const T*, \
                                     const AttentionMask*, T*, T*);                         \
  template void attention_backward<T>(const AttentionGeometry&, const T*, const T*,         \
                                      const T*, const T*, const T*, const AttentionMask*,   \
                                      T*, T*, T*);

HANDFORMER_INSTANTIATE_KERNELS(float)
HANDFORMER_INSTANTIATE_KERNELS(double)
#undef HANDFORMER_INSTANTIATE_KERNELS

}  // namespace kernels

template <typename T>
AttentionResult<T> softmax_attention(const Tensor<T>& queries, const Tensor<T>& keys,
                                     const Tensor<T>& values_in,
                                     const std::optional<AttentionMask>& mask) {
  require(queries.rank() == 2 && keys.rank() == 2 && values_in.rank() == 2,
          ErrorCode::kShapeMismatch, "attention operands must be matrices");
  const std::size_t n_q = queries.dim(0);
  const std::size_t n_k = keys.dim(0);
  const std::size_t d_h = queries.dim(1);
  require(keys.dim(1) == d_h && values_in.dim(1) == d_h && values_in.dim(0) == n_k,
          ErrorCode::kShapeMismatch,
          "attention shape mismatch: q " + shape_string(queries.shape()) + " k " +
              shape_string(keys.shape()) + " v " + shape_string(values_in.shape()));
  if (mask) {
    require(mask->rows() == n_q && mask->cols() == n_k, ErrorCode::kShapeMismatch,
            "attention mask shape mismatch");
    mask->validate();
  }
  AttentionResult<T> result{Tensor<T>({n_q, d_h}), Tensor<T>({n_q, n_k})};
  kernels::AttentionGeometry g{1, n_q, n_k, d_h, 1};
  kernels::attention_forward(g, queries.data(), keys.data(), values_in.data(),
                             mask ? &*mask : nullptr, result.output.data(),
                             result.weights.data());
  return result;
}

template <typename T>
Tensor<T> temporal_conv1d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                          std::size_t stride, std::size_t padding) {
  require(input.rank() == 2, ErrorCode::kShapeMismatch, "conv input must be [C_in x L]");
  require(bias.size() == kernels.dim(0), ErrorCode::kShapeMismatch, "bias must have C_out entries");
  const auto g = kernels::conv_geometry({1, input.dim(0), input.dim(1)}, kernels.shape(), stride,
                                        padding);
  Tensor<T> out({g.out_channels, g.out_length});
  kernels::conv1d_forward(g, input.data(), kernels.data(), bias.data(), out.data());
  return out;
}

template <typename T>
T cross_entropy(const Tensor<T>& logits, std::size_t target) {
  require(target < logits.size(), ErrorCode::kInvalidArgument,
          "target class " + std::to_string(target) + " out of range for " +
              std::to_string(logits.size()) + " classes");
  T max_logit = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) max_logit = std::max(max_logit, logits[i]);
  T total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += std::exp(logits[i] - max_logit);
  const T loss = std::log(total) + max_logit - logits[target];
  return std::max(loss, T{0});
}

template AttentionResult<float> softmax_attention(const Tensor<float>&, const Tensor<float>&,
                                                  const Tensor<float>&,
                                                  const std::optional<AttentionMask>&);
template AttentionResult<double> softmax_attention(const Tensor<double>&, const Tensor<double>&,
                                                   const Tensor<double>&,
                                                   const std::optional<AttentionMask>&);
template Tensor<float> temporal_conv1d(const Tensor<float>&, const Tensor<float>&,
                                       const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> temporal_conv1d(const Tensor<double>&, const Tensor<double>&,
                                        const Tensor<double>&, std::size_t, std::size_t);
template float cross_entropy(const Tensor<float>&, std::size_t);
template double cross_entropy(const Tensor<double>&, std::size_t);

}  // namespace handformer::nn
