#include "diffurec/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "diffurec/errors.hpp"

namespace diffurec {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto d : shape_)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
  if (shape_size(shape_) != data_.size())
    throw DimensionError("shape " + shape_string(shape_) + " holds " + std::to_string(shape_size(shape_)) +
                         " values, got " + std::to_string(data_.size()));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::row(std::size_t r) const {
  if (rank() != 2) throw DimensionError("row() needs a rank-2 tensor, got " + shape_string(shape_));
  const auto cols = shape_[1];
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(r * cols),
                          data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  return Tensor(Shape{cols}, std::move(out));
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (!on) grad_.clear();
}

std::span<double> Tensor::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

bool Tensor::identical(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace diffurec
