#include <algorithm>

#include "diffurec/autodiff.hpp"
#include "diffurec/errors.hpp"

namespace diffurec {

const Shape& Var::shape() const { return tape_->shape(id_); }
std::size_t Var::size() const { return shape_size(shape()); }
std::span<const double> Var::value() const { return tape_->value(id_); }

Tensor Var::tensor() const {
  auto v = value();
  return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

double Var::item() const {
  auto v = value();
  if (v.size() != 1) throw ContractError("item() on a tensor of shape " + shape_string(shape()));
  return v[0];
}

std::span<const double> Var::grad() const { return tape_->grad_if_any(id_); }

Var Tape::constant(Tensor value) {
  auto v = value.values();
  return push(value.shape(), std::move(v), false, nullptr);
}

Var Tape::variable(Tensor value) {
  auto v = value.values();
  return push(value.shape(), std::move(v), recording_, nullptr);
}

Var Tape::param(Tensor& param) {
  Node node;
  node.shape = param.shape();
  node.source = &param;
  node.sink = &param;
  node.needs_grad = recording_ && param.requires_grad();
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::view(const Tensor& value) {
  Node node;
  node.shape = value.shape();
  node.source = &value;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::push(Shape shape, std::vector<double> value, bool needs_grad, BackwardFn fn) {
  Node node;
  node.shape = std::move(shape);
  node.value = std::move(value);
  node.needs_grad = recording_ && needs_grad;
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::span<const double> Tape::value(std::uint32_t id) const {
  const auto& node = nodes_[id];
  if (node.source) return node.source->data();
  return node.value;
}

std::span<double> Tape::grad(std::uint32_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad.assign(shape_size(node.shape), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss was recorded on a different tape");
  if (shape_size(shape(loss.id())) != 1)
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(shape(loss.id())));
  if (!nodes_[loss.id()].needs_grad) return;
  grad(loss.id())[0] = 1.0;
  for (std::int64_t id = loss.id(); id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.empty()) continue;
    if (node.backward) {
      node.backward(*this, static_cast<std::uint32_t>(id));
    } else if (node.sink) {
      auto dst = node.sink->grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node.grad[i];
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  nodes_.shrink_to_fit();
}

}  // namespace diffurec
