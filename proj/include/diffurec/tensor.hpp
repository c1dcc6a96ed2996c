#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace diffurec {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Parameters are Tensors with requires_grad set; a Tape bound to them
/// accumulates adjoints into grad() on backward.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t row, std::size_t col) { return data_[row * shape_.back() + col]; }
  double at(std::size_t row, std::size_t col) const { return data_[row * shape_.back() + col]; }

  /// Returns a copy of row `r` of a rank-2 tensor as a rank-1 tensor.
  Tensor row(std::size_t r) const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on);

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<double> grad();
  std::span<const double> grad() const { return grad_; }
  void zero_grad();
  void clear_grad() { grad_.clear(); }

  /// Same shape and bitwise-equal values (grad is ignored).
  bool identical(const Tensor& other) const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::vector<double> grad_;
};

}  // namespace diffurec
