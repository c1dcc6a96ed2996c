#include "diffurec/adam.hpp"

#include <cmath>

#include "diffurec/errors.hpp"

namespace diffurec {

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
}

void Adam::ensure_state(std::span<Tensor* const> params) {
  if (shapes_.empty()) {
    for (const Tensor* p : params) {
      shapes_.push_back(p->shape());
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
    return;
  }
  if (params.size() != shapes_.size())
    throw ContractError("adam: got " + std::to_string(params.size()) + " parameters, state tracks " +
                        std::to_string(shapes_.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != shapes_[i])
      throw ContractError("adam: parameter " + std::to_string(i) + " has shape " + shape_string(params[i]->shape()) +
                          ", state expects " + shape_string(shapes_[i]));
}

void Adam::update(Tensor& param, std::span<const double> grad, std::size_t slot, double c1, double c2) {
  auto& m = m_[slot];
  auto& v = v_[slot];
  auto w = param.data();
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    if (m[i] == 0.0) continue;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    w[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

void Adam::step(std::span<Tensor* const> params) {
  ensure_state(params);
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = *params[i];
    update(*params[i], p.has_grad() ? p.grad() : std::span<const double>{}, i, c1, c2);
  }
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (grads.size() != params.size())
    throw ContractError("adam: " + std::to_string(grads.size()) + " gradients for " + std::to_string(params.size()) +
                        " parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].shape() != params[i]->shape())
      throw ContractError("adam: gradient " + std::to_string(i) + " has shape " + shape_string(grads[i].shape()) +
                          ", parameter has " + shape_string(params[i]->shape()));
  ensure_state(params);
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) update(*params[i], grads[i].data(), i, c1, c2);
}

}  // namespace diffurec
