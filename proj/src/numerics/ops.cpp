#include "handformer/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace handformer::nn {

// ---------------------------------------------------------------- tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& param) {
  Node node;
  node.value = param.value;
  node.needs_grad = param.trainable;
  node.param = param.trainable ? &param : nullptr;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
  return record(std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const Var<T>& in : inputs) {
    require(in.tape == this, ErrorCode::kInvalidArgument, "operands recorded on different tapes");
    node.needs_grad = node.needs_grad || nodes_[in.id].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor<T>(node.value.shape());
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
  require(root.tape == this, ErrorCode::kInvalidArgument, "root is not on this tape");
  require(value(root.id).size() == 1, ErrorCode::kShapeMismatch,
          "backward() needs a scalar root, got " + shape_string(value(root.id).shape()));
  if (!nodes_[root.id].needs_grad) return;
  grad(root.id)[0] += T{1};
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.needs_grad || node.grad.empty()) continue;
    if (node.backward) node.backward(*this, id);
    if (node.param) {
      T* dst = node.param->grad.data();
      const T* src = node.grad.data();
      for (std::size_t i = 0; i < node.grad.size(); ++i) dst[i] += src[i];
    }
  }
}

template class Tape<float>;
template class Tape<double>;

// ---------------------------------------------------------------- helpers

namespace {

template <typename T>
void accumulate(Tape<T>& tape, Var<T> target, const T* src) {
  if (!tape.needs_grad(target.id)) return;
  Tensor<T>& g = tape.grad(target.id);
  T* dst = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, ErrorCode::kShapeMismatch,
          std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

std::size_t product(const Shape& shape, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= shape[i];
  return n;
}

// dst[out index] (+)= src[permuted index]; `order[i]` names the source axis of output axis i.
template <typename T>
void permute_into(const T* src, const Shape& src_shape, const std::vector<std::size_t>& order,
                  T* dst, bool add) {
  const std::size_t rank = src_shape.size();
  std::vector<std::size_t> src_strides(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;) src_strides[i] = src_strides[i + 1] * src_shape[i + 1];
  Shape out_shape(rank);
  std::vector<std::size_t> strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = src_shape[order[i]];
    strides[i] = src_strides[order[i]];
  }
  const std::size_t total = shape_size(src_shape);
  std::vector<std::size_t> index(rank, 0);
  std::size_t src_offset = 0;
  for (std::size_t n = 0; n < total; ++n) {
    if (add) {
      dst[n] += src[src_offset];
    } else {
      dst[n] = src[src_offset];
    }
    for (std::size_t axis = rank; axis-- > 0;) {
      ++index[axis];
      src_offset += strides[axis];
      if (index[axis] < out_shape[axis]) break;
      src_offset -= strides[axis] * out_shape[axis];
      index[axis] = 0;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::size_t self) {
    const T* g = tape.grad(self).data();
    accumulate(tape, a, g);
    accumulate(tape, b, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  check_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad(self);
    accumulate(tape, a, g.data());
    if (tape.needs_grad(b.id)) {
      T* gb = tape.grad(b.id).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  check_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad(self);
    const Tensor<T>& av = tape.value(a.id);
    const Tensor<T>& bv = tape.value(b.id);
    if (tape.needs_grad(a.id)) {
      T* ga = tape.grad(a.id).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tape.needs_grad(b.id)) {
      T* gb = tape.grad(b.id).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v *= factor;
  return x.tape->record(std::move(out), {x}, [x, factor](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad(self);
    T* gx = tape.grad(x.id).data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

template <typename T>
Var<T> add_trailing(Var<T> x, Var<T> y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  require(ys.size() <= xs.size() && std::equal(ys.begin(), ys.end(), xs.end() - ys.size()),
          ErrorCode::kShapeMismatch,
          "add_trailing: " + shape_string(ys) + " is not a suffix of " + shape_string(xs));
  Tensor<T> out = x.value();
  const std::size_t inner = y.value().size();
  const T* yv = y.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += yv[i % inner];
  return x.tape->record(std::move(out), {x, y}, [x, y, inner](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad(self);
    accumulate(tape, x, g.data());
    if (tape.needs_grad(y.id)) {
      T* gy = tape.grad(y.id).data();
      for (std::size_t i = 0; i < g.size(); ++i) gy[i % inner] += g[i];
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.values()) v = v > T{0} ? v : T{0};
  return x.tape->record(std::move(out), {x}, [x](Tape<T>& tape, std::size_t self) {
    const Tensor<T>& g = tape.grad(self);
    const Tensor<T>& xv = tape.value(x.id);
    T* gx = tape.grad(x.id).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > T{0}) gx[i] += g[i];
    }
  });
}

// ---------------------------------------------------------------- dense

template <typename T>
Var<T> matmul(Var<T> x, Var<T> w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require(ws.size() == 2 && xs.back() == ws[0], ErrorCode::kShapeMismatch,
          "matmul: " + shape_string(xs) + " x " + shape_string(ws));
  const std::size_t k = ws[0];
  const std::size_t n = ws[1];
  const std::size_t m = x.value().size() / k;
  Shape out_shape = xs;
  out_shape.back() = n;
  Tensor<T> out(out_shape);
  kernels::matmul_nn(x.value().data(), w.value().data(), out.data(), m, k, n, false);
  return x.tape->record(std::move(out), {x, w}, [x, w, m, k, n](Tape<T>& tape, std::size_t self) {
    const T* g = tape.grad(self).data();
    if (tape.needs_grad(x.id)) {
      kernels::matmul_nt(g, tape.value(w.id).data(), tape.grad(x.id).data(), m, n, k, true);
    }
    if (tape.needs_grad(w.id)) {
      kernels::matmul_tn(tape.value(x.id).data(), g, tape.grad(w.id).data(), k, m, n, true);
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  const std::size_t d = x.shape().back();
  require(gamma.value().size() == d && beta.value().size() == d, ErrorCode::kShapeMismatch,
          "layer_norm: affine parameters must have " + std::to_string(d) + " entries");
  const std::size_t rows = x.value().size() / d;
  Tensor<T> out(x.shape());
  std::vector<T> normed(x.value().size());
  std::vector<T> rstd(rows);
  const T* xv = x.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    T mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<T>(d);
    rstd[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const T xhat = (row[c] - mean) * rstd[r];
      normed[r * d + c] = xhat;
      out[r * d + c] = gv[c] * xhat + bv[c];
    }
  }
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, d, rows, normed = std::move(normed), rstd = std::move(rstd)](
          Tape<T>& tape, std::size_t self) {
        const T* g = tape.grad(self).data();
        const T* gv = tape.value(gamma.id).data();
        if (tape.needs_grad(gamma.id) || tape.needs_grad(beta.id)) {
          T* dg = tape.needs_grad(gamma.id) ? tape.grad(gamma.id).data() : nullptr;
          T* db = tape.needs_grad(beta.id) ? tape.grad(beta.id).data() : nullptr;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              if (dg) dg[c] += g[r * d + c] * normed[r * d + c];
              if (db) db[c] += g[r * d + c];
            }
          }
        }
        if (tape.needs_grad(x.id)) {
          T* dx = tape.grad(x.id).data();
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_dxhat = 0;
            T mean_dxhat_xhat = 0;
            for (std::size_t c = 0; c < d; ++c) {
              const T dxhat = g[r * d + c] * gv[c];
              mean_dxhat += dxhat;
              mean_dxhat_xhat += dxhat * normed[r * d + c];
            }
            mean_dxhat /= static_cast<T>(d);
            mean_dxhat_xhat /= static_cast<T>(d);
            for (std::size_t c = 0; c < d; ++c) {
              const T dxhat = g[r * d + c] * gv[c];
              dx[r * d + c] +=
                  rstd[r] * (dxhat - mean_dxhat - normed[r * d + c] * mean_dxhat_xhat);
            }
          }
        }
      });
}

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> kernels_in, Var<T> bias, std::size_t stride, std::size_t padding) {
  const auto g = kernels::conv_geometry(x.shape(), kernels_in.shape(), stride, padding);
  require(bias.value().size() == g.out_channels, ErrorCode::kShapeMismatch,
          "conv1d: bias must have C_out entries");
  Tensor<T> out({g.batch, g.out_channels, g.out_length});
  kernels::conv1d_forward(g, x.value().data(), kernels_in.value().data(), bias.value().data(),
                          out.data());
  return x.tape->record(std::move(out), {x, kernels_in, bias},
                        [x, kernels_in, bias, g](Tape<T>& tape, std::size_t self) {
                          kernels::conv1d_backward(
                              g, tape.value(x.id).data(), tape.value(kernels_in.id).data(),
                              tape.grad(self).data(),
                              tape.needs_grad(x.id) ? tape.grad(x.id).data() : nullptr,
                              tape.needs_grad(kernels_in.id) ? tape.grad(kernels_in.id).data()
                                                             : nullptr,
                              tape.needs_grad(bias.id) ? tape.grad(bias.id).data() : nullptr);
                        });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, const AttentionMask* mask,
                 Tensor<T>* weights_out) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  require(qs.size() == 3 && ks == v.shape() && ks.size() == 3 && qs[0] == ks[0] && qs[2] == ks[2],
          ErrorCode::kShapeMismatch,
          "attention shape mismatch: q " + shape_string(qs) + " k " + shape_string(ks) + " v " +
              shape_string(v.shape()));
  require(heads > 0 && qs[2] % heads == 0, ErrorCode::kInvalidArgument,
          "attention width " + std::to_string(qs[2]) + " not divisible into " +
              std::to_string(heads) + " heads");
  const kernels::AttentionGeometry g{qs[0], qs[1], ks[1], qs[2], heads};
  if (mask) {
    require(mask->rows() == g.queries && mask->cols() == g.keys, ErrorCode::kShapeMismatch,
            "attention mask shape mismatch");
    mask->validate();
  }
  Tensor<T> out(qs);
  Tensor<T> weights({g.batch, g.heads, g.queries, g.keys});
  kernels::attention_forward(g, q.value().data(), k.value().data(), v.value().data(), mask,
                             out.data(), weights.data());
  if (weights_out) *weights_out = weights;
  std::optional<AttentionMask> mask_copy;
  if (mask) mask_copy = *mask;
  return q.tape->record(
      std::move(out), {q, k, v},
      [q, k, v, g, mask_copy = std::move(mask_copy), weights = std::move(weights)](
          Tape<T>& tape, std::size_t self) {
        kernels::attention_backward(
            g, tape.value(q.id).data(), tape.value(k.id).data(), tape.value(v.id).data(),
            weights.data(), tape.grad(self).data(), mask_copy ? &*mask_copy : nullptr,
            tape.needs_grad(q.id) ? tape.grad(q.id).data() : nullptr,
            tape.needs_grad(k.id) ? tape.grad(k.id).data() : nullptr,
            tape.needs_grad(v.id) ? tape.grad(v.id).data() : nullptr);
      });
}

// ---------------------------------------------------------------- layout

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(out), {x}, [x](Tape<T>& tape, std::size_t self) {
    accumulate(tape, x, tape.grad(self).data());
  });
}

template <typename T>
Var<T> permute(Var<T> x, const std::vector<std::size_t>& order) {
  const Shape& xs = x.shape();
  require(order.size() == xs.size(), ErrorCode::kShapeMismatch, "permute: rank mismatch");
  std::vector<std::size_t> inverse(order.size());
  std::vector<bool> seen(order.size(), false);
  Shape out_shape(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    require(order[i] < order.size() && !seen[order[i]], ErrorCode::kInvalidArgument,
            "permute: order is not a permutation");
    seen[order[i]] = true;
    inverse[order[i]] = i;
    out_shape[i] = xs[order[i]];
  }
  Tensor<T> out(out_shape);
  permute_into(x.value().data(), xs, order, out.data(), false);
  return x.tape->record(std::move(out), {x},
                        [x, inverse, out_shape](Tape<T>& tape, std::size_t self) {
                          if (!tape.needs_grad(x.id)) return;
                          permute_into(tape.grad(self).data(), out_shape, inverse,
                                       tape.grad(x.id).data(), true);
                        });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat: no operands");
  Shape out_shape = parts[0].shape();
  require(axis < out_shape.size(), ErrorCode::kInvalidArgument, "concat: axis out of range");
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const Var<T>& p : parts) {
    Shape s = p.shape();
    require(s.size() == out_shape.size(), ErrorCode::kShapeMismatch, "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      require(i == axis || s[i] == out_shape[i], ErrorCode::kShapeMismatch,
              "concat: extent mismatch on axis " + std::to_string(i));
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = product(out_shape, 0, axis);
  const std::size_t inner = product(out_shape, axis + 1, out_shape.size());
  const std::size_t total_axis = out_shape[axis];
  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const T* src = parts[p].value().data();
    const std::size_t block = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * block, src + (o + 1) * block,
                out.data() + o * total_axis * inner + offset * inner);
    }
    offset += extents[p];
  }
  return parts[0].tape->record(
      std::move(out), parts,
      [parts, extents, outer, inner, total_axis](Tape<T>& tape, std::size_t self) {
        const T* g = tape.grad(self).data();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
          const std::size_t block = extents[p] * inner;
          if (tape.needs_grad(parts[p].id)) {
            T* dst = tape.grad(parts[p].id).data();
            for (std::size_t o = 0; o < outer; ++o) {
              const T* src = g + o * total_axis * inner + offset * inner;
              for (std::size_t i = 0; i < block; ++i) dst[o * block + i] += src[i];
            }
          }
          offset += extents[p];
        }
      });
}

template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& xs = x.shape();
  require(axis < xs.size() && begin < end && end <= xs[axis], ErrorCode::kInvalidArgument,
          "slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") invalid for " + shape_string(xs));
  Shape out_shape = xs;
  out_shape[axis] = end - begin;
  const std::size_t outer = product(xs, 0, axis);
  const std::size_t inner = product(xs, axis + 1, xs.size());
  const std::size_t src_block = xs[axis] * inner;
  const std::size_t dst_block = (end - begin) * inner;
  Tensor<T> out(out_shape);
  const T* src = x.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(src + o * src_block + begin * inner, src + o * src_block + end * inner,
              out.data() + o * dst_block);
  }
  return x.tape->record(std::move(out), {x},
                        [x, outer, inner, begin, src_block, dst_block](Tape<T>& tape,
                                                                       std::size_t self) {
                          const T* g = tape.grad(self).data();
                          T* dst = tape.grad(x.id).data();
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t i = 0; i < dst_block; ++i) {
                              dst[o * src_block + begin * inner + i] += g[o * dst_block + i];
                            }
                          }
                        });
}

template <typename T>
Var<T> mean_axis(Var<T> x, std::size_t axis) {
  const Shape& xs = x.shape();
  require(axis < xs.size(), ErrorCode::kInvalidArgument, "mean_axis: axis out of range");
  const std::size_t outer = product(xs, 0, axis);
  const std::size_t extent = xs[axis];
  const std::size_t inner = product(xs, axis + 1, xs.size());
  Shape out_shape;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i != axis) out_shape.push_back(xs[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor<T> out(out_shape);
  const T* src = x.value().data();
  const T inv = T{1} / static_cast<T>(extent);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < extent; ++a) {
      for (std::size_t i = 0; i < inner; ++i) {
        out[o * inner + i] += src[(o * extent + a) * inner + i];
      }
    }
  }
  for (T& v : out.values()) v *= inv;
  return x.tape->record(std::move(out), {x},
                        [x, outer, extent, inner, inv](Tape<T>& tape, std::size_t self) {
                          const T* g = tape.grad(self).data();
                          T* dst = tape.grad(x.id).data();
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t a = 0; a < extent; ++a) {
                              for (std::size_t i = 0; i < inner; ++i) {
                                dst[(o * extent + a) * inner + i] += g[o * inner + i] * inv;
                              }
                            }
                          }
                        });
}

template <typename T>
Var<T> broadcast_axis(Var<T> x, std::size_t axis, std::size_t count) {
  const Shape& xs = x.shape();
  require(axis <= xs.size() && count > 0, ErrorCode::kInvalidArgument,
          "broadcast_axis: invalid axis or count");
  Shape out_shape = xs;
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  const std::size_t outer = product(xs, 0, axis);
  const std::size_t inner = product(xs, axis, xs.size());
  Tensor<T> out(out_shape);
  const T* src = x.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < count; ++c) {
      std::copy(src + o * inner, src + (o + 1) * inner, out.data() + (o * count + c) * inner);
    }
  }
  return x.tape->record(std::move(out), {x},
                        [x, outer, count, inner](Tape<T>& tape, std::size_t self) {
                          const T* g = tape.grad(self).data();
                          T* dst = tape.grad(x.id).data();
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t c = 0; c < count; ++c) {
                              for (std::size_t i = 0; i < inner; ++i) {
                                dst[o * inner + i] += g[(o * count + c) * inner + i];
                              }
                            }
                          }
                        });
}

template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<std::size_t>& ids) {
  const Shape& ts = table.shape();
  require(ts.size() == 2 && !ids.empty(), ErrorCode::kShapeMismatch,
          "gather_rows: table must be [rows, d] and ids non-empty");
  const std::size_t d = ts[1];
  Tensor<T> out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] < ts[0], ErrorCode::kInvalidArgument, "gather_rows: id out of range");
    const T* src = table.value().data() + ids[r] * d;
    std::copy(src, src + d, out.data() + r * d);
  }
  return table.tape->record(std::move(out), {table}, [table, ids, d](Tape<T>& tape,
                                                                     std::size_t self) {
    const T* g = tape.grad(self).data();
    T* dst = tape.grad(table.id).data();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      for (std::size_t c = 0; c < d; ++c) dst[ids[r] * d + c] += g[r * d + c];
    }
  });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum_all(Var<T> x) {
  T total = 0;
  for (T v : x.value().values()) total += v;
  return x.tape->record(Tensor<T>::scalar(total), {x}, [x](Tape<T>& tape, std::size_t self) {
    const T g = tape.grad(self)[0];
    for (T& v : tape.grad(x.id).values()) v += g;
  });
}

template <typename T>
Var<T> l1_sum(Var<T> x) {
  T total = 0;
  for (T v : x.value().values()) total += std::abs(v);
  return x.tape->record(Tensor<T>::scalar(total), {x}, [x](Tape<T>& tape, std::size_t self) {
    const T g = tape.grad(self)[0];
    const Tensor<T>& xv = tape.value(x.id);
    T* dst = tape.grad(x.id).data();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > T{0}) {
        dst[i] += g;
      } else if (xv[i] < T{0}) {
        dst[i] -= g;
      }
    }
  });
}

template <typename T>
Var<T> cross_entropy_mean(Var<T> logits, const std::vector<std::size_t>& targets) {
  const Shape& ls = logits.shape();
  require(ls.size() == 2 && ls[0] == targets.size(), ErrorCode::kShapeMismatch,
          "cross_entropy: logits " + shape_string(ls) + " vs " + std::to_string(targets.size()) +
              " targets");
  const std::size_t batch = ls[0];
  const std::size_t classes = ls[1];
  std::vector<T> probs(batch * classes);
  T total = 0;
  const T* lv = logits.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    require(targets[b] < classes, ErrorCode::kInvalidArgument,
            "target class " + std::to_string(targets[b]) + " out of range for " +
                std::to_string(classes) + " classes");
    const T* row = lv + b * classes;
    const T max_logit = *std::max_element(row, row + classes);
    T norm = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = std::exp(row[c] - max_logit);
      norm += probs[b * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= norm;
    total += std::log(norm) + max_logit - row[targets[b]];
  }
  const T inv = T{1} / static_cast<T>(batch);
  return logits.tape->record(
      Tensor<T>::scalar(total * inv), {logits},
      [logits, targets, batch, classes, inv, probs = std::move(probs)](Tape<T>& tape,
                                                                        std::size_t self) {
        const T g = tape.grad(self)[0] * inv;
        T* dst = tape.grad(logits.id).data();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const T onehot = c == targets[b] ? T{1} : T{0};
            dst[b * classes + c] += g * (probs[b * classes + c] - onehot);
          }
        }
      });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<T>& weights) {
  require(!scalars.empty() && scalars.size() == weights.size(), ErrorCode::kInvalidArgument,
          "weighted_sum: operand/weight count mismatch");
  T total = 0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require(scalars[i].value().size() == 1, ErrorCode::kShapeMismatch,
            "weighted_sum: operands must be scalars");
    total += weights[i] * scalars[i].value()[0];
  }
  return scalars[0].tape->record(Tensor<T>::scalar(total), scalars,
                                 [scalars, weights](Tape<T>& tape, std::size_t self) {
                                   const T g = tape.grad(self)[0];
                                   for (std::size_t i = 0; i < scalars.size(); ++i) {
                                     if (tape.needs_grad(scalars[i].id)) {
                                       tape.grad(scalars[i].id)[0] += weights[i] * g;
                                     }
                                   }
                                 });
}

template <typename T>
Var<T> detach(Var<T> x) {
  return x.tape->constant(x.value());
}

#define HANDFORMER_INSTANTIATE_OPS(T)                                                        \
  template Var<T> add(Var<T>, Var<T>);                                                       \
  template Var<T> sub(Var<T>, Var<T>);                                                       \
  template Var<T> mul(Var<T>, Var<T>);                                                       \
  template Var<T> scale(Var<T>, T);                                                          \
  template Var<T> add_trailing(Var<T>, Var<T>);                                              \
  template Var<T> relu(Var<T>);                                                              \
  template Var<T> matmul(Var<T>, Var<T>);                                                    \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                     \
  template Var<T> conv1d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);                  \
  template Var<T> attention(Var<T>, Var<T>, Var<T>, std::size_t, const AttentionMask*,       \
                            Tensor<T>*);                                                     \
  template Var<T> reshape(Var<T>, Shape);                                                    \
  template Var<T> permute(Var<T>, const std::vector<std::size_t>&);                          \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                           \
  template Var<T> slice(Var<T>, std::size_t, std::size_t, std::size_t);                      \
  template Var<T> mean_axis(Var<T>, std::size_t);                                            \
  template Var<T> broadcast_axis(Var<T>, std::size_t, std::size_t);                          \
  template Var<T> gather_rows(Var<T>, const std::vector<std::size_t>&);                      \
  template Var<T> sum_all(Var<T>);                                                           \
  template Var<T> l1_sum(Var<T>);                                                            \
  template Var<T> cross_entropy_mean(Var<T>, const std::vector<std::size_t>&);               \
  template Var<T> weighted_sum(const std::vector<Var<T>>&, const std::vector<T>&);           \
  template Var<T> detach(Var<T>);

HANDFORMER_INSTANTIATE_OPS(float)
HANDFORMER_INSTANTIATE_OPS(double)
#undef HANDFORMER_INSTANTIATE_OPS

}  // namespace handformer::nn
