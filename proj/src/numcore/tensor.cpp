#include "awml/numcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "awml/common/error.hpp"

namespace awml::num {

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw SchemaError("tensor dimensions must be positive: " + shape_string(shape_));
  }
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (auto d : shape_) {
    if (d == 0) throw SchemaError("tensor dimensions must be positive: " + shape_string(shape_));
  }
  if (shape_product(shape_) != data_.size()) {
    throw SchemaError("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor(Shape{rows, cols}, fill);
}

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  return 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace awml::num
