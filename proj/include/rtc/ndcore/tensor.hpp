#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rtc::nd {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles.
//
// Storage is shared between copies and cloned on the first mutable access
// of a non-unique copy, so passing tensors by value is cheap and a tensor
// observed through a const reference never changes underneath the reader.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_->size(); }

  std::span<const double> data() const { return *data_; }
  std::span<double> mutable_data();

  double operator[](std::size_t i) const { return (*data_)[i]; }
  double& operator[](std::size_t i) { return mutable_data()[i]; }

  // Rank-2 element access.
  double at(std::size_t r, std::size_t c) const {
    return (*data_)[r * shape_[1] + c];
  }
  double& at(std::size_t r, std::size_t c) {
    return mutable_data()[r * shape_[1] + c];
  }

  std::span<const double> row(std::size_t r) const;
  std::span<double> mutable_row(std::size_t r);

  // Same data, new shape; element counts must match.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  // Bitwise equality of shape and contents.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
};

}  // namespace rtc::nd
