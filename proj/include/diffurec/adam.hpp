#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diffurec/tensor.hpp"

namespace diffurec {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are created on the first step
/// and must keep matching the parameter list afterwards.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// Applies one update using each parameter's grad(); parameters without a
  /// gradient buffer are treated as having zero gradient.
  void step(std::span<Tensor* const> params);
  /// Same, with gradients supplied separately (one per parameter, same shapes).
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

  std::int64_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

 private:
  void ensure_state(std::span<Tensor* const> params);
  void update(Tensor& param, std::span<const double> grad, std::size_t slot, double c1, double c2);

  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<Shape> shapes_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace diffurec
