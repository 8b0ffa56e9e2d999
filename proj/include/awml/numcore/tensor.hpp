#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace awml::num {

using Shape = std::vector<std::size_t>;

// Fixed 64-byte alignment keeps vectorized kernels on the same code path for
// every allocation, so results do not depend on where the heap puts a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. Rank 1 tensors act as row vectors when
// combined with matrices.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor vector(std::vector<double> values);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix view: rank 2 is (shape[0], shape[1]); rank 1 is (1, shape[0]);
  // rank 0 is (1, 1).
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  // Value of a one-element tensor.
  double item() const;

  bool all_finite() const;
  void fill(double value);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  Storage data_;
};

}  // namespace awml::num
