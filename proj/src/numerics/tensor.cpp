#include "handformer/numerics/tensor.hpp"

#include <cmath>
#include <sstream>

namespace handformer {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kMalformedHeader: return "malformed header";
    case ErrorCode::kExtentMismatch: return "extent mismatch";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kIo: return "i/o failure";
    case ErrorCode::kIncompatibleFactorization: return "incompatible factorization";
    case ErrorCode::kDegenerate: return "degenerate input";
    case ErrorCode::kMissingFeature: return "missing feature";
    case ErrorCode::kNumerical: return "numerical failure";
  }
  return "unknown";
}

}  // namespace handformer

namespace handformer::nn {

const char* dtype_name(DType dtype) {
  return dtype == DType::kSingle ? "f32" : "f64";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void check_extents(const Shape& shape) {
  require(!shape.empty(), ErrorCode::kShapeMismatch, "tensor shape must have rank >= 1");
  for (std::size_t extent : shape) {
    require(extent > 0, ErrorCode::kShapeMismatch,
            "tensor extents must be positive, got " + shape_string(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  values_.assign(shape_size(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_extents(shape_);
  require(values_.size() == shape_size(shape_), ErrorCode::kShapeMismatch,
          "value count " + std::to_string(values_.size()) + " does not match shape " +
              shape_string(shape_));
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
  require(index.size() == shape_.size(), ErrorCode::kShapeMismatch, "index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    require(i < shape_[axis], ErrorCode::kInvalidArgument, "index out of range");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
  return values_[offset(index)];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  return values_[offset(index)];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  require(shape_size(shape) == values_.size(), ErrorCode::kShapeMismatch,
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), values_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(values_.begin(), values_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace handformer::nn
