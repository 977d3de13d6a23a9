#include "rtc/ndcore/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "rtc/error.hpp"

namespace rtc::nd {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor() : Tensor(Shape{}) {}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(element_count(shape_))) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(std::move(data))) {
  if (element_count(shape_) != data_->size()) {
    throw StructuralError("tensor shape " + shape_string(shape_) +
                          " does not match " + std::to_string(data_->size()) +
                          " values");
  }
}

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

std::span<double> Tensor::mutable_data() {
  if (data_.use_count() > 1) {
    data_ = std::make_shared<std::vector<double>>(*data_);
  }
  return *data_;
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t cols = shape_.back();
  return data().subspan(r * cols, cols);
}

std::span<double> Tensor::mutable_row(std::size_t r) {
  const std::size_t cols = shape_.back();
  return mutable_data().subspan(r * cols, cols);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != size()) {
    throw StructuralError("cannot reshape " + shape_string(shape_) + " to " +
                          shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool Tensor::all_finite() const {
  for (double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::identical(const Tensor& other) const {
  return shape_ == other.shape_ && size() == other.size() &&
         std::memcmp(data_->data(), other.data_->data(),
                     size() * sizeof(double)) == 0;
}

}  // namespace rtc::nd
